"""
Min-max shortest path over K scenarios.

`solve_sp` rounds the LP(L*) flow by repeatedly pricing arcs with 0/1
lengths: every round finds the layered cut-sets of the current shortest
l-path, picks one arc per cut-set by deterministic RS rounding and makes
those arcs free. It stops once the shortest l-path uses at most
ceil(sqrt(n lnK / lnlnK)) unselected arcs. `solve_sp_average_baseline` is the
K-approximation obtained from Dijkstra on averaged costs.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np

from src.instance_model import (
    DiscreteSolution,
    Instance,
    InvariantViolation,
    NoFeasibleL,
    RunReport,
    SolverFailure,
    evaluate,
)
from src.lp_engine import LpSettings, minimize_L, remove_cycles, series_reduce
from src.selection_rounding import GroupedFractional, round_rs_deterministic

logger = logging.getLogger(__name__)


@dataclass
class SpConfig:
    hop_threshold: Optional[int] = None
    round_cap: Optional[int] = None
    mass_abort: float = 0.99
    lp: LpSettings = field(default_factory=LpSettings)


def hop_threshold(n: int, K: int) -> int:
    """ceil(sqrt(n lnK / lnlnK)), K clamped to at least 3."""
    K = max(K, 3)
    return max(1, math.ceil(math.sqrt(n * math.log(K) / math.log(math.log(K)))))


class LabeledDag:
    """
    Acyclic support graph with 0/1 arc lengths. Distances are recomputed
    from scratch by `relabel()`; ties between equally short paths go to the
    lexicographically smallest arc-id sequence.
    """

    def __init__(self, instance: Instance, x: np.ndarray):
        self.instance = instance
        self.x = np.asarray(x, dtype=float)
        self.lengths = np.ones(instance.m, dtype=int)
        self._graph = instance.graph()
        try:
            self._order = list(nx.lexicographical_topological_sort(self._graph))
        except nx.NetworkXUnfeasible as exc:
            raise InvariantViolation("flow support still contains a directed cycle") from exc
        self.dist: Dict[int, float] = {}
        self._best: Dict[int, Tuple[int, ...]] = {}
        self.relabel()

    def relabel(self):
        s = self.instance.s
        dist = {v: math.inf for v in self._graph.nodes}
        best: Dict[int, Tuple[int, ...]] = {s: ()}
        dist[s] = 0
        for v in self._order:
            for u, _, e in self._graph.in_edges(v, keys=True):
                if dist[u] == math.inf:
                    continue
                candidate = (dist[u] + int(self.lengths[e]), best[u] + (e,))
                if candidate < (dist[v], best.get(v, ())):
                    dist[v], best[v] = candidate
        self.dist = dist
        self._best = best

    @property
    def path_length(self) -> int:
        """l_P: number of unselected arcs on the current shortest l-path."""
        d = self.dist[self.instance.t]
        if d == math.inf:
            raise InvariantViolation("target unreachable in the flow support")
        return int(d)

    def shortest_path(self) -> Tuple[int, ...]:
        return self._best[self.instance.t]

    def selected(self) -> List[int]:
        return [int(e) for e in np.flatnonzero(self.lengths == 0)]

    def select(self, arcs):
        for e in arcs:
            self.lengths[e] = 0
        self.relabel()

    def selected_components(self) -> Tuple[int, bool]:
        """Connected components of the zero-length subgraph and whether it is a forest."""
        g = nx.MultiGraph()
        g.add_nodes_from(range(self.instance.n))
        for e in self.selected():
            u, v = self.instance.edges[e]
            g.add_edge(u, v, key=e)
        return nx.number_connected_components(g), nx.is_forest(g)


@dataclass
class CutsetFamily:
    sets: List[Tuple[int, ...]]
    masses: List[float]


def extract_cutsets(dag: LabeledDag, x: Optional[np.ndarray] = None) -> CutsetFamily:
    """E_i = {(u, v) unselected : d(u) = i - 1, d(v) = i} for i = 1..l_P."""
    x = dag.x if x is None else np.asarray(x, dtype=float)
    layers = dag.path_length
    sets: List[List[int]] = [[] for _ in range(layers)]
    for e, (u, v) in enumerate(dag.instance.edges):
        if dag.lengths[e] != 1:
            continue
        du, dv = dag.dist[u], dag.dist[v]
        if du == math.inf or dv == math.inf:
            continue
        if dv == du + 1 and 1 <= dv <= layers:
            sets[int(dv) - 1].append(e)
    masses = [float(x[list(s)].sum()) if s else 0.0 for s in sets]
    return CutsetFamily([tuple(s) for s in sets], masses)


def _normalized_groups(family: CutsetFamily, x: np.ndarray, m: int, mass_abort: float) -> np.ndarray:
    x_hat = np.zeros(m)
    for i, (group, mass) in enumerate(zip(family.sets, family.masses)):
        if mass < mass_abort:
            raise InvariantViolation(f"cut-set {i + 1} carries fractional mass {mass:.6f} < {mass_abort}")
        if mass < 1.0 - 1e-9:
            logger.warning(f"Cut-set {i + 1} mass {mass:.9f} below 1, renormalising")
        x_hat[list(group)] = x[list(group)] / mass
    return x_hat


def solve_sp(instance: Instance, config: Optional[SpConfig] = None) -> Tuple[DiscreteSolution, RunReport]:
    if not instance.is_sp:
        raise ValueError("solve_sp needs a shortest path instance")
    config = config or SpConfig()
    started = time.perf_counter()

    bound, fractional = minimize_L(instance, config.lp)
    x = remove_cycles(instance, fractional.x)
    reduction = series_reduce(instance, x)
    reduced = reduction.instance
    dag = LabeledDag(reduced, reduction.x)
    costs = reduced.cost_matrix
    threshold = config.hop_threshold if config.hop_threshold is not None else hop_threshold(instance.n, instance.K)
    round_cap = config.round_cap if config.round_cap is not None else max(instance.n, reduced.m)

    rounds: List[Dict] = []
    selections: List[List[int]] = []
    while dag.path_length > threshold:
        if len(rounds) >= round_cap:
            raise SolverFailure(f"no path with at most {threshold} unselected arcs after {round_cap} rounds")
        family = extract_cutsets(dag)
        x_hat = _normalized_groups(family, dag.x, reduced.m, config.mass_abort)
        outcome = round_rs_deterministic(GroupedFractional.rs(family.sets, x_hat, float(bound)), costs)

        before, _ = dag.selected_components()
        path_length = dag.path_length
        dag.select(outcome.chosen)
        after, forest = dag.selected_components()
        if not forest:
            logger.warning(f"Round {len(rounds) + 1}: selected arcs no longer form a forest")
        elif before - after != path_length:
            logger.warning(f"Round {len(rounds) + 1}: components dropped by {before - after}, expected {path_length}")
        rounds.append({
            "path_length": path_length,
            "masses": family.masses,
            "components_before": before,
            "components_after": after,
            "forest": forest,
            "potential": outcome.potential_trace,
        })
        selections.append(reduction.expand(outcome.chosen))
        logger.debug(f"Round {len(rounds)}: l_P={path_length}, chose {len(outcome.chosen)} arcs")

    round_bound = math.ceil(instance.n / threshold)
    if len(rounds) > round_bound:
        logger.warning(f"{len(rounds)} rounds exceed ceil(n / l_hat) = {round_bound}")

    reduced_path = dag.shortest_path()
    unselected = sum(1 for a in reduced_path if dag.lengths[a] == 1)
    solution = evaluate(instance, reduction.expand(reduced_path))
    if float(solution.max_cost) < float(bound) - 1e-9 * max(1.0, float(bound)):
        raise InvariantViolation(f"path cost {solution.max_cost} is below the lower bound {bound}")

    report = RunReport(
        algorithm="sp-alg1",
        rounds=len(rounds),
        selections=selections,
        lower_bound=bound,
        max_cost=solution.max_cost,
        wall_time=time.perf_counter() - started,
        details={
            "hop_threshold": threshold,
            "reduced_nodes": reduced.n,
            "reduced_arcs": reduced.m,
            "unselected_on_path": unselected,
            "round_bound": round_bound,
            "within_round_bound": len(rounds) <= round_bound,
            "rounds": rounds,
        },
    )
    logger.info(f"sp-alg1 on {instance.name or 'instance'}: max cost {solution.max_cost}, "
                f"L* {bound}, {len(rounds)} rounds, ratio {report.ratio:.4f}")
    return solution, report


def solve_sp_average_baseline(instance: Instance) -> DiscreteSolution:
    """Dijkstra on c_e = (1/K) sum_k c_e^k; at most K times the optimum."""
    if not instance.is_sp:
        raise ValueError("solve_sp_average_baseline needs a shortest path instance")
    averages = [sum(instance.edge_costs(e), Fraction(0)) / instance.K for e in range(instance.m)]
    g = nx.DiGraph()
    g.add_nodes_from(range(instance.n))
    for e, (u, v) in enumerate(instance.edges):
        if g.has_edge(u, v) and (g[u][v]["weight"], g[u][v]["id"]) <= (averages[e], e):
            continue
        g.add_edge(u, v, weight=averages[e], id=e)
    try:
        nodes = nx.dijkstra_path(g, instance.s, instance.t, weight="weight")
    except nx.NetworkXNoPath as exc:
        raise NoFeasibleL(f"no path from {instance.s} to {instance.t}") from exc
    return evaluate(instance, [g[u][v]["id"] for u, v in zip(nodes, nodes[1:])])
