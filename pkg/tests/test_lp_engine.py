from fractions import Fraction
from itertools import combinations

import networkx as nx
import numpy as np
import pytest

from src.generators import fixture_instances, gen_gap_mst, gen_gap_sp, gen_random, gap_mst_solid_edges
from src.instance_model import Instance, InvariantViolation, NoFeasibleL, ProblemKind
from src.lp_engine import (
    LazyFamily,
    SeparationStatus,
    build_model,
    build_mst_model,
    build_selection_model,
    build_sp_model,
    cut_value,
    edge_filter,
    minimize_L,
    minimize_selection_L,
    remove_cycles,
    separate_spanning_cuts,
    series_reduce,
    solve_feasibility,
    verify_certificate_exact,
)
from src.oracle import brute_force_opt

F = Fraction


def parallel_routes(length=3):
    """Two disjoint s-t routes of `length` arcs; scenario 0 charges route A, scenario 1 route B."""
    n = 2 * length
    t = n - 1
    route_a = [0] + list(range(1, length)) + [t]
    route_b = [0] + list(range(length, 2 * length - 1)) + [t]
    edges = list(zip(route_a, route_a[1:])) + list(zip(route_b, route_b[1:]))
    scenarios = (
        tuple(F(1) if e < length else F(0) for e in range(2 * length)),
        tuple(F(0) if e < length else F(1) for e in range(2 * length)),
    )
    return Instance(ProblemKind.SHORTEST_PATH, n, tuple(edges), scenarios, 0, t, "parallel")


def triangle():
    return Instance(
        ProblemKind.SPANNING_TREE, 3,
        ((0, 1), (1, 2), (0, 2)),
        ((F(1), F(0), F(0)), (F(0), F(1), F(0)), (F(0), F(0), F(1))),
    )


def test_edge_filter():
    instance = Instance(ProblemKind.SPANNING_TREE, 2, ((0, 1), (0, 1)), ((F(1), F(3)), (F(2), F(0))))
    assert edge_filter(instance, 2) == {0}
    assert edge_filter(instance, 3) == {0, 1}
    assert edge_filter(instance, F(1, 2)) == frozenset()
    with pytest.raises(ValueError):
        edge_filter(instance, -1)


def test_sp_model_rows():
    model = build_sp_model(parallel_routes(), L=2)
    labels = [row.label for row in model.rows]
    assert labels[:2] == ["scenario0", "scenario1"]
    assert "source" in labels and "target" in labels
    assert model.l_index is None
    assert model.lazy_family == LazyFamily.NONE


def test_mst_model_is_lazy():
    model = build_mst_model(triangle())
    assert model.lazy_family == LazyFamily.SPANNING_CUTS
    assert model.l_index == 3
    assert model.objective == {3: 1.0}


def test_minimize_L_between_breakpoints():
    bound, solution = minimize_L(parallel_routes())
    assert bound == F(3, 2)
    assert solution.x == pytest.approx([0.5] * 6, abs=1e-7)
    assert solution.exact_x == tuple([F(1, 2)] * 6)
    assert set(solution.tight_scenarios) == {0, 1}


def test_minimize_L_respects_edge_filter():
    # the cheap-looking mixed route needs arc 3 whose max cost is 2
    instance = Instance(
        ProblemKind.SHORTEST_PATH, 4,
        ((0, 1), (1, 3), (0, 2), (2, 3)),
        ((F(1), F(1), F(0), F(0)), (F(0), F(0), F(1), F(2))),
        0, 3,
    )
    bound, _ = minimize_L(instance)
    assert bound == 2


def test_feasibility_at_fixed_level():
    instance = parallel_routes()
    assert solve_feasibility(build_sp_model(instance, L=F(3, 2))).feasible
    assert not solve_feasibility(build_sp_model(instance, L=F(7, 5))).feasible


def test_no_feasible_level():
    instance = Instance(ProblemKind.SHORTEST_PATH, 3, ((0, 1),), ((F(1),),), 0, 2)
    with pytest.raises(NoFeasibleL):
        minimize_L(instance)


def test_verify_certificate_exact():
    instance = parallel_routes()
    half = [F(1, 2)] * 6
    assert verify_certificate_exact(instance, half, F(3, 2))
    assert not verify_certificate_exact(instance, half, F(7, 5))
    assert not verify_certificate_exact(instance, [F(1)] * 3 + [F(0)] * 3, F(1))


def test_gap_sp_level_zero_certificate_is_unique_half_flow():
    instance = gen_gap_sp(0)
    bound, solution = minimize_L(instance)
    assert bound == 1
    assert solution.exact_x == tuple([F(1, 2)] * 8)
    assert verify_certificate_exact(instance, solution.exact_x, bound)


def test_gap_sp_level_one():
    instance = gen_gap_sp(1)
    bound, _ = minimize_L(instance)
    assert bound == 1
    # top-level dashed arcs carry 1/2, every arc inside a copy 1/4
    top_dashed = {16, 17, 34, 35}
    x = [F(1, 2) if e in top_dashed else F(1, 4) for e in range(instance.m)]
    assert verify_certificate_exact(instance, x, 1)
    assert not verify_certificate_exact(instance, x, F(99, 100))


@pytest.mark.parametrize("k", [2, 3])
def test_gap_mst_lower_bound_is_one(k):
    instance = gen_gap_mst(k)
    bound, solution = minimize_L(instance)
    assert bound == 1
    assert solution.x.sum() == pytest.approx(instance.n - 1)


def test_gap_mst_certificate():
    instance = gen_gap_mst(2)
    solid = set(gap_mst_solid_edges(2))
    x = [F(1, 2) if e in solid else F(1) for e in range(instance.m)]
    assert verify_certificate_exact(instance, x, 1)
    assert not verify_certificate_exact(instance, [F(1, 4) if e in solid else F(1) for e in range(instance.m)], 1)


def test_triangle_lower_bound():
    bound, solution = minimize_L(triangle())
    assert bound == 1
    assert solution.x.sum() == pytest.approx(2.0)


def test_separation():
    instance = triangle()
    assert separate_spanning_cuts(instance, [0.0, 0.0, 0.0]).status == SeparationStatus.VIOLATED
    assert separate_spanning_cuts(instance, [1.0, 1.0, 0.0]).status == SeparationStatus.ALL_SATISFIED
    assert separate_spanning_cuts(instance, [0.5, 0.5, 0.5]).status == SeparationStatus.ALL_SATISFIED
    result = separate_spanning_cuts(instance, [0.4, 0.4, 0.4])
    assert result.status == SeparationStatus.VIOLATED
    assert result.violation == pytest.approx(0.2)
    assert len(result.cut) == 1
    assert result.as_row().rhs == 1.0


def test_selection_relaxations():
    costs = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    L, x = minimize_selection_L(costs, groups=[[0, 1, 2]])
    assert L == pytest.approx(0.0)
    assert x[2] == pytest.approx(1.0)
    L, x = minimize_selection_L(costs, p=2)
    assert L == pytest.approx(1.0)
    assert x.sum() == pytest.approx(2.0)
    with pytest.raises(ValueError):
        build_selection_model(costs)


def test_remove_cycles_cancels_circulation():
    instance = Instance(
        ProblemKind.SHORTEST_PATH, 4,
        ((0, 1), (1, 2), (1, 3), (3, 1)),
        ((F(1), F(1), F(1), F(1)),),
        0, 2,
    )
    x = remove_cycles(instance, [1.0, 1.0, 0.5, 0.5])
    assert list(x) == pytest.approx([1.0, 1.0, 0.0, 0.0])


def test_series_reduce_gap_level_zero():
    instance = gen_gap_sp(0)
    reduction = series_reduce(instance, [0.5] * instance.m)
    reduced = reduction.instance
    assert (reduced.n, reduced.m) == (3, 4)
    assert reduction.arc_map == ((0, 2), (1, 3), (4, 6), (5, 7))
    assert reduction.x == pytest.approx([0.5] * 4)
    assert reduction.expand([0, 2]) == [0, 2, 4, 6]
    # merged costs are sums of the original arcs
    assert reduced.cost_matrix.sum() == pytest.approx(instance.cost_matrix.sum())


def test_series_reduce_rejects_unequal_flow():
    instance = Instance(ProblemKind.SHORTEST_PATH, 3, ((0, 1), (1, 2)), ((F(1), F(1)),), 0, 2)
    with pytest.raises(InvariantViolation):
        series_reduce(instance, [1.0, 0.5])


def min_cut_by_enumeration(instance, x):
    """Smallest x-weight over every proper node subset containing node 0."""
    others = range(1, instance.n)
    best = None
    for size in range(0, instance.n - 1):
        for rest in combinations(others, size):
            value = cut_value(instance, x, {0, *rest})
            best = value if best is None else min(best, value)
    return best


@pytest.mark.parametrize("seed", range(100))
def test_separation_matches_cut_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    instance = gen_random(ProblemKind.SPANNING_TREE, n, float(rng.uniform(0.2, 0.8)), 1, seed)
    x = rng.uniform(0.0, 0.8, size=instance.m)
    result = separate_spanning_cuts(instance, x)
    best = min_cut_by_enumeration(instance, x)
    violated = best < 1.0 - 1e-7
    assert (result.status == SeparationStatus.VIOLATED) == violated
    assert result.violation == pytest.approx(1.0 - best, abs=1e-9)
    assert cut_value(instance, x, result.cut) == pytest.approx(best, abs=1e-9)


def cyclic_instance(rng, n, K):
    """Chain 0 -> n-1 plus random backward and forward arcs."""
    edges = [(i, i + 1) for i in range(n - 1)]
    edges += [(j, i) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.3]
    edges += [(i, j) for i in range(n) for j in range(i + 2, n) if rng.random() < 0.2]
    costs = rng.integers(0, 10, size=(K, len(edges)))
    scenarios = tuple(tuple(F(int(c)) for c in row) for row in costs)
    return Instance(ProblemKind.SHORTEST_PATH, n, tuple(edges), scenarios, 0, n - 1)


def net_outflow(instance, x):
    flow = np.zeros(instance.n)
    for e, (u, v) in enumerate(instance.edges):
        flow[u] += x[e]
        flow[v] -= x[e]
    return flow


@pytest.mark.parametrize("seed", range(20))
def test_remove_cycles_on_random_supports(seed):
    rng = np.random.default_rng(seed)
    instance = cyclic_instance(rng, int(rng.integers(4, 9)), 3)
    x = rng.uniform(0.0, 1.0, size=instance.m)
    cleaned = remove_cycles(instance, x)
    support = nx.MultiDiGraph()
    support.add_nodes_from(range(instance.n))
    support.add_edges_from(instance.edges[e] for e in range(instance.m) if cleaned[e] > 0)
    assert nx.is_directed_acyclic_graph(support)
    assert np.all(cleaned <= x + 1e-12)
    assert np.all(cleaned >= 0)
    assert net_outflow(instance, cleaned) == pytest.approx(net_outflow(instance, x), abs=1e-7)
    costs = instance.cost_matrix
    assert (costs @ cleaned).max() <= (costs @ x).max() + 1e-9


@pytest.mark.parametrize("instance", [gen_gap_sp(0), gen_gap_mst(2),
                                      gen_random(ProblemKind.SHORTEST_PATH, 7, 0.4, 3, 2),
                                      gen_random(ProblemKind.SPANNING_TREE, 6, 0.5, 3, 2)],
                         ids=lambda instance: instance.name)
def test_lp_feasible_above_lower_bound(instance):
    bound, _ = minimize_L(instance)
    rng = np.random.default_rng(7)
    levels = [bound + F(1, 10**6), bound + F(1, 1000)]
    levels += [bound + F(int(v), 100) for v in rng.integers(1, 300, size=4)]
    for level in levels:
        assert solve_feasibility(build_model(instance, level)).feasible


@pytest.mark.parametrize("instance", fixture_instances(), ids=lambda instance: instance.name)
def test_lower_bound_never_exceeds_optimum(instance):
    bound, _ = minimize_L(instance)
    assert bound <= brute_force_opt(instance).max_cost
