"""
Min-max spanning tree over K scenarios.

Two roundings of the LP(L*) point x*:
  - `solve_mst_deterministic` selects n - 1 edges by SI rounding, then keeps
    connecting the forest: contract its components, take an independent set
    of the contracted graph with the minimum-degree greedy and let each
    independent component pick one leaving edge by RS rounding.
  - `solve_mst_randomized` flips an x*_e-coin k_hat times per edge, keeps the
    edges with at least one head and extracts a spanning tree if they connect
    the graph.
`solve_mst_average_baseline` is the minimum spanning tree under averaged costs.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from itertools import repeat
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from src.instance_model import (
    ConfigError,
    DiscreteSolution,
    Instance,
    InvariantViolation,
    RunReport,
    SolverFailure,
    evaluate,
)
from src.lp_engine import LpSettings, minimize_L
from src.selection_rounding import GroupedFractional, round_rs_deterministic, round_si_deterministic

logger = logging.getLogger(__name__)


# --- Contraction and independent sets ---

@dataclass
class ContractedGraph:
    """H = (U, W): one node per forest component, one edge per support edge between components."""
    instance: Instance
    component: Tuple[int, ...]
    comp_count: int
    edges: Tuple[Tuple[int, int, int], ...]

    def multigraph(self) -> nx.MultiGraph:
        h = nx.MultiGraph()
        h.add_nodes_from(range(self.comp_count))
        for cu, cv, e in self.edges:
            h.add_edge(cu, cv, key=e)
        return h

    def simple_graph(self) -> nx.Graph:
        return nx.Graph(self.multigraph())

    def delta(self, c: int) -> List[int]:
        """Original ids of the contracted edges incident to component c."""
        return [e for cu, cv, e in self.edges if c in (cu, cv)]


def contract(instance: Instance, forest: Sequence[int], support: Sequence[int]) -> ContractedGraph:
    uf = nx.utils.UnionFind(range(instance.n))
    for e in forest:
        uf.union(*instance.edges[e])
    ids: Dict[int, int] = {}
    component = []
    for v in range(instance.n):
        component.append(ids.setdefault(uf[v], len(ids)))
    edges = []
    for e in sorted(support):
        u, v = instance.edges[e]
        if component[u] != component[v]:
            edges.append((component[u], component[v], e))
    return ContractedGraph(instance, tuple(component), len(ids), tuple(edges))


def independent_set_min(h: Union[ContractedGraph, nx.Graph]) -> List[int]:
    """
    Greedy MIN heuristic: take a minimum-degree node (lowest id on ties),
    delete it with its neighbours, repeat. Runs on the simple graph
    underlying a contracted multigraph.
    """
    g = h.simple_graph() if isinstance(h, ContractedGraph) else nx.Graph(h)
    size = g.number_of_nodes()
    if size == 0:
        return []
    avg_degree = 2.0 * g.number_of_edges() / size
    chosen = []
    while g.number_of_nodes():
        node = min(g.nodes, key=lambda v: (g.degree(v), v))
        chosen.append(node)
        g.remove_nodes_from([node, *g.neighbors(node)])
    if len(chosen) < size / (1.0 + avg_degree) - 1e-9:
        raise InvariantViolation(f"independent set of size {len(chosen)} below |U|/(1+d) = {size / (1 + avg_degree):.3f}")
    return sorted(chosen)


# --- Deterministic rounding ---

@dataclass
class MstConfig:
    round_cap: Optional[int] = None
    lp: LpSettings = field(default_factory=LpSettings)


def default_round_cap(n: int) -> int:
    return 4 * math.ceil(math.log2(max(n, 2))) + 8


def _single_node(instance: Instance, algorithm: str) -> Tuple[DiscreteSolution, RunReport]:
    solution = evaluate(instance, [])
    return solution, RunReport(algorithm, lower_bound=Fraction(0), max_cost=solution.max_cost)


def solve_mst_deterministic(instance: Instance, config: Optional[MstConfig] = None
                            ) -> Tuple[DiscreteSolution, RunReport]:
    if instance.is_sp:
        raise ValueError("solve_mst_deterministic needs a spanning tree instance")
    if instance.n == 1:
        return _single_node(instance, "mst-det")
    config = config or MstConfig()
    started = time.perf_counter()

    bound, fractional = minimize_L(instance, config.lp)
    x = fractional.x
    support = fractional.support
    costs = instance.cost_matrix

    first = round_si_deterministic(GroupedFractional.si(support, x, instance.n - 1, float(bound)), costs)
    uf = nx.utils.UnionFind(range(instance.n))
    forest: List[int] = []
    for e in first.chosen:
        u, v = instance.edges[e]
        if uf[u] != uf[v]:
            uf.union(u, v)
            forest.append(e)
    selections = [list(first.chosen)]
    logger.debug(f"SI rounding kept {len(forest)} of {len(first.chosen)} edges as a forest")

    cap = config.round_cap if config.round_cap is not None else default_round_cap(instance.n)
    rounds: List[Dict] = []
    while len(forest) < instance.n - 1:
        if len(rounds) >= cap:
            raise SolverFailure(f"forest still has {instance.n - len(forest)} components after {cap} rounds")
        h = contract(instance, forest, support)
        simple = h.simple_graph()
        avg_degree = 2.0 * simple.number_of_edges() / h.comp_count
        independent = independent_set_min(simple)
        groups = [h.delta(c) for c in independent]
        seen = set()
        for c, group in zip(independent, groups):
            if not group:
                raise InvariantViolation(f"component {c} has no support edge leaving it")
            if seen.intersection(group):
                raise InvariantViolation(f"RS groups overlap at component {c}")
            seen.update(group)
        x_hat = np.zeros(instance.m)
        for group in groups:
            x_hat[group] = x[group] / x[group].sum()
        outcome = round_rs_deterministic(GroupedFractional.rs(groups, x_hat, float(bound)), costs)
        for e in outcome.chosen:
            u, v = instance.edges[e]
            if uf[u] == uf[v]:
                raise InvariantViolation(f"edge {e} closes a cycle in the forest")
            uf.union(u, v)
            forest.append(e)
        rounds.append({
            "components": h.comp_count,
            "independent": len(independent),
            "avg_degree": avg_degree,
            "alpha": 1.0 + avg_degree,
            "potential": outcome.potential_trace,
        })
        selections.append(list(outcome.chosen))
        logger.debug(f"Round {len(rounds)}: {h.comp_count} components, |I|={len(independent)}, d={avg_degree:.3f}")

    solution = evaluate(instance, forest)
    report = RunReport(
        algorithm="mst-det",
        rounds=len(rounds),
        selections=selections,
        lower_bound=bound,
        max_cost=solution.max_cost,
        wall_time=time.perf_counter() - started,
        details={"round_cap": cap, "support": len(support), "rounds": rounds},
    )
    logger.info(f"mst-det on {instance.name or 'instance'}: max cost {solution.max_cost}, "
                f"L* {bound}, {len(rounds)} rounds, ratio {report.ratio:.4f}")
    return solution, report


# --- Randomized coin rounding ---

class CoinMode(str, Enum):
    ANALYTIC = "analytic"
    PRACTICAL = "practical"


@dataclass
class CoinConfig:
    """
    ANALYTIC mode flips ceil((40 + gamma) ln n) coins per edge and fails on a
    disconnected draw. PRACTICAL mode flips `practical_k` coins and redraws
    up to `max_retries` times.
    """
    gamma: float = 1.0
    mode: CoinMode = CoinMode.ANALYTIC
    practical_k: int = 8
    max_retries: int = 20
    seed: Optional[int] = None
    lp: LpSettings = field(default_factory=LpSettings)

    def coin_rounds(self, n: int, K: int) -> int:
        if self.mode == CoinMode.PRACTICAL:
            if self.practical_k < 1:
                raise ConfigError(f"practical_k must be positive, got {self.practical_k}")
            return self.practical_k
        if self.gamma < 0:
            raise ConfigError(f"gamma must be nonnegative, got {self.gamma}")
        k_hat = math.ceil((40 + self.gamma) * math.log(n))
        if n > 1 and k_hat <= math.log(2 * n * n * K):
            raise ConfigError(f"k_hat={k_hat} must exceed ln(2n^2K)={math.log(2 * n * n * K):.3f}; raise gamma")
        return max(k_hat, 1)

    @property
    def attempts(self) -> int:
        return 1 if self.mode == CoinMode.ANALYTIC else 1 + self.max_retries


def coin_threshold(k_hat: int, L: float, n: int, K: int) -> float:
    """Scenario cost that the coin-flip subgraph exceeds only with small probability."""
    L = float(L)
    return k_hat * L + (math.e - 1) * math.sqrt(k_hat * L * math.log(2 * n * n * K))


def _draw(support: np.ndarray, x: np.ndarray, k_hat: int, rng: np.random.Generator) -> np.ndarray:
    heads = rng.random((len(support), k_hat)) < x[support][:, None]
    return support[heads.any(axis=1)]


def _spanning_tree_of(instance: Instance, included: Sequence[int]) -> Optional[List[int]]:
    """Kruskal by (max scenario cost, id); None if the edges do not span."""
    uf = nx.utils.UnionFind(range(instance.n))
    tree = []
    for e in sorted(included, key=lambda e: (instance.max_costs[e], e)):
        u, v = instance.edges[e]
        if uf[u] != uf[v]:
            uf.union(u, v)
            tree.append(int(e))
    return tree if len(tree) == instance.n - 1 else None


@dataclass
class CoinTrial:
    seed: int
    connected: bool
    attempts: int
    included: int
    included_cost: float
    max_cost: Optional[Fraction] = None


def _coin_trial(instance: Instance, bound: Fraction, x: np.ndarray, coin: CoinConfig, k_hat: int, seed: int
                ) -> Tuple[CoinTrial, Optional[List[int]]]:
    support = np.flatnonzero(x > 0)
    scale = float(bound) if bound > 0 else 1.0
    included = np.array([], dtype=int)
    for attempt in range(coin.attempts):
        rng = np.random.default_rng([seed, attempt])
        included = _draw(support, x, k_hat, rng)
        tree = _spanning_tree_of(instance, included)
        included_cost = float(instance.cost_matrix[:, included].sum(axis=1).max()) / scale if len(included) else 0.0
        if tree is not None:
            trial = CoinTrial(seed, True, attempt + 1, len(included), included_cost,
                              evaluate(instance, tree).max_cost)
            return trial, tree
        logger.debug(f"Seed {seed} attempt {attempt}: {len(included)} edges do not span")
    return CoinTrial(seed, False, coin.attempts, len(included), included_cost), None


def _check_scenario_count(instance: Instance):
    if instance.K > instance.n ** 4:
        logger.warning(f"K={instance.K} exceeds n^4={instance.n ** 4}; the coin-flip bound assumes K = poly(n)")


def solve_mst_randomized(instance: Instance, coin: CoinConfig) -> Tuple[DiscreteSolution, RunReport]:
    if instance.is_sp:
        raise ValueError("solve_mst_randomized needs a spanning tree instance")
    if coin.seed is None:
        raise ConfigError("randomized rounding needs an explicit seed")
    k_hat = coin.coin_rounds(instance.n, instance.K)
    if instance.n == 1:
        return _single_node(instance, "mst-rand")
    _check_scenario_count(instance)
    started = time.perf_counter()

    bound, fractional = minimize_L(instance, coin.lp)
    trial, tree = _coin_trial(instance, bound, fractional.x, coin, k_hat, coin.seed)
    report = RunReport(
        algorithm="mst-rand",
        rounds=trial.attempts,
        lower_bound=bound,
        rng_seed=coin.seed,
        wall_time=time.perf_counter() - started,
        details={
            "mode": coin.mode.value,
            "coin_rounds": k_hat,
            "included_edges": trial.included,
            "included_cost_normalized": trial.included_cost,
            "threshold_normalized": coin_threshold(k_hat, 1.0, instance.n, instance.K),
        },
    )
    if tree is None:
        raise SolverFailure(f"coin-flip subgraph disconnected after {trial.attempts} attempt(s)", report)
    solution = evaluate(instance, tree)
    report.max_cost = solution.max_cost
    report.selections = [sorted(tree)]
    logger.info(f"mst-rand on {instance.name or 'instance'}: max cost {solution.max_cost}, "
                f"L* {bound}, {trial.attempts} attempt(s), k_hat {k_hat}")
    return solution, report


def _trial_worker(args) -> CoinTrial:
    instance, bound, x, coin, k_hat, seed = args
    return _coin_trial(instance, bound, x, coin, k_hat, seed)[0]


def monte_carlo(instance: Instance, coin: CoinConfig, seeds: Sequence[int], workers: int = 1
                ) -> Tuple[Fraction, List[CoinTrial]]:
    """L* and one CoinTrial per seed (in seed order), sharing a single LP solve."""
    if instance.is_sp:
        raise ValueError("monte_carlo needs a spanning tree instance")
    k_hat = coin.coin_rounds(instance.n, instance.K)
    _check_scenario_count(instance)
    bound, fractional = minimize_L(instance, coin.lp)
    jobs = list(zip(repeat(instance), repeat(bound), repeat(fractional.x), repeat(coin), repeat(k_hat), seeds))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            trials = list(executor.map(_trial_worker, jobs))
    else:
        trials = [_trial_worker(job) for job in jobs]
    connected = sum(t.connected for t in trials)
    logger.info(f"Monte Carlo on {instance.name or 'instance'}: {connected}/{len(trials)} connected, k_hat {k_hat}")
    return bound, trials


# --- Baseline ---

def solve_mst_average_baseline(instance: Instance) -> DiscreteSolution:
    """Minimum spanning tree under c_e = (1/K) sum_k c_e^k; at most K times the optimum."""
    if instance.is_sp:
        raise ValueError("solve_mst_average_baseline needs a spanning tree instance")
    g = nx.MultiGraph()
    g.add_nodes_from(range(instance.n))
    for e, (u, v) in enumerate(instance.edges):
        g.add_edge(u, v, key=e, weight=sum(instance.edge_costs(e), Fraction(0)) / instance.K)
    tree = [key for _, _, key in nx.minimum_spanning_edges(g, algorithm="kruskal", weight="weight",
                                                           keys=True, data=False)]
    return evaluate(instance, tree)
