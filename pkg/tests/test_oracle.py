from fractions import Fraction
from itertools import combinations

import networkx as nx
import numpy as np
import pytest

from src.generators import gen_cst, gen_gap_mst, gen_gap_sp, gen_random, singleton_cuts
from src.instance_model import EnumerationLimitError, Instance, NoFeasibleL, ProblemKind
from src.oracle import brute_force_opt, count_spanning_trees, integer_costs, optimum_value

F = Fraction


@pytest.mark.parametrize("r,expected", [(0, 2), (1, 4)])
def test_gap_sp_optimum(r, expected):
    assert optimum_value(gen_gap_sp(r)) == expected


@pytest.mark.parametrize("k", [2, 3])
def test_gap_mst_optimum(k):
    solution = brute_force_opt(gen_gap_mst(k))
    assert solution.max_cost == k
    assert len(solution.edges) == (k * k + k + 1) - 1


def test_triangle_optimum():
    instance = Instance(
        ProblemKind.SPANNING_TREE, 3,
        ((0, 1), (1, 2), (0, 2)),
        ((F(1), F(0), F(0)), (F(0), F(1), F(0)), (F(0), F(0), F(1))),
    )
    assert optimum_value(instance) == 1


def test_k4_singletons_is_min_degree_tree():
    # max tree degree; a Hamiltonian path achieves 2
    assert optimum_value(gen_cst(nx.complete_graph(4), singleton_cuts(4))) == 2


def test_single_arc():
    instance = Instance(ProblemKind.SHORTEST_PATH, 2, ((0, 1),), ((F(3),), (F(5, 2),)), 0, 1)
    solution = brute_force_opt(instance)
    assert solution.edges == (0,)
    assert solution.max_cost == 3


def test_no_path():
    instance = Instance(ProblemKind.SHORTEST_PATH, 3, ((0, 1),), ((F(1),),), 0, 2)
    with pytest.raises(NoFeasibleL):
        brute_force_opt(instance)


def test_count_spanning_trees():
    assert count_spanning_trees(gen_cst(nx.complete_graph(4), singleton_cuts(4))) == 16
    # two blocks of two parallel 2-paths, 4 trees each
    assert count_spanning_trees(gen_gap_mst(2)) == 16
    single = Instance(ProblemKind.SPANNING_TREE, 1, (), ((),))
    assert count_spanning_trees(single) == 1


def test_enumeration_limit():
    with pytest.raises(EnumerationLimitError):
        brute_force_opt(gen_gap_mst(3), limit=5)
    with pytest.raises(EnumerationLimitError):
        brute_force_opt(gen_gap_sp(1), limit=3)


def test_integer_costs_scale_to_common_denominator():
    instance = Instance(ProblemKind.SHORTEST_PATH, 2, ((0, 1), (0, 1)), ((F(1, 2), F(1, 3)),), 0, 1)
    assert integer_costs(instance).tolist() == [[3, 2]]


@pytest.mark.parametrize("seed", range(6))
def test_optimum_invariant_under_edge_order(seed):
    instance = gen_random(ProblemKind.SPANNING_TREE, 7, 0.5, 3, seed)
    order = np.random.default_rng(seed).permutation(instance.m)
    shuffled = Instance(
        instance.kind, instance.n,
        tuple(instance.edges[e] for e in order),
        tuple(tuple(row[e] for e in order) for row in instance.scenarios),
    )
    assert optimum_value(shuffled) == optimum_value(instance)


def test_matches_edge_subset_enumeration():
    instance = gen_random(ProblemKind.SPANNING_TREE, 6, 0.6, 3, 9)
    best = None
    for subset in combinations(range(instance.m), instance.n - 1):
        g = nx.MultiGraph()
        g.add_nodes_from(range(instance.n))
        g.add_edges_from(instance.edges[e] for e in subset)
        if not nx.is_tree(g):
            continue
        value = max(sum(row[e] for e in subset) for row in instance.scenarios)
        best = value if best is None else min(best, value)
    assert optimum_value(instance) == best
