"""
LP(L) models for min-max shortest path, spanning tree and the two selection
problems, plus the solve / separate loop, the exact search for L* and the
post-processing of fractional s-t flows.
"""

import bisect
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from src.instance_model import (
    SUPPORT_EPS,
    FractionalSolution,
    Instance,
    InvariantViolation,
    IterationLimitError,
    NoFeasibleL,
    ProblemKind,
)
from src.simplex import EQ, GE, LE, BoundedSimplex, LpStatus, LpTrace

logger = logging.getLogger(__name__)

_TRACE: Optional[LpTrace] = None


def configure_trace(trace: Optional[LpTrace]):
    """Route pivot and cut events of every subsequent solve to `trace`."""
    global _TRACE
    _TRACE = trace


@dataclass
class LpSettings:
    feasibility_tol: float = 1e-9
    separation_tol: float = 1e-7
    cut_cap_factor: int = 10
    denominator_limit: int = 10 ** 6


DEFAULT_SETTINGS = LpSettings()


class LazyFamily(str, Enum):
    NONE = "none"
    SPANNING_CUTS = "spanning_cuts"


@dataclass
class LpRow:
    coefs: Tuple[Tuple[int, float], ...]
    relation: str
    rhs: float
    label: str = ""


@dataclass
class LpModel:
    """
    Explicit rows over `num_vars` variables. Variables 0..m-1 are edge
    variables; in minimise-L mode the last variable is L and `objective`
    selects it, otherwise the model is a pure feasibility problem.
    """
    num_vars: int
    rows: List[LpRow]
    lower: np.ndarray
    upper: np.ndarray
    objective: Optional[Dict[int, float]] = None
    lazy_family: LazyFamily = LazyFamily.NONE
    instance: Optional[Instance] = None
    l_index: Optional[int] = None

    def validate(self):
        for r, row in enumerate(self.rows):
            for var, _ in row.coefs:
                if not 0 <= var < self.num_vars:
                    raise ValueError(f"row {r} ({row.label}) references variable {var}")
            if row.relation not in (LE, EQ, GE):
                raise ValueError(f"row {r} has unknown relation {row.relation!r}")
        if np.any(self.lower > self.upper):
            raise ValueError("variable bounds with lo > hi")


class SeparationStatus(str, Enum):
    ALL_SATISFIED = "all_satisfied"
    VIOLATED = "violated"


@dataclass
class SeparationResult:
    status: SeparationStatus
    cut: FrozenSet[int] = frozenset()
    cut_edges: Tuple[int, ...] = ()
    violation: float = 0.0

    def as_row(self) -> LpRow:
        return LpRow(tuple((e, 1.0) for e in self.cut_edges), GE, 1.0, f"cut{sorted(self.cut)}")


@dataclass
class LpSolution:
    feasible: bool
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    cuts: List[LpRow] = field(default_factory=list)
    pivots: int = 0


# --- E(L) ---

def edge_filter(instance: Instance, L) -> FrozenSet[int]:
    """Edges whose cost is at most L under every scenario."""
    if L < 0:
        raise ValueError("L must be nonnegative")
    return frozenset(e for e, c in enumerate(instance.max_costs) if c <= L)


# --- Model builders ---

def _edge_bounds(m: int, allowed, with_l: bool):
    lower = np.zeros(m + (1 if with_l else 0))
    upper = np.zeros(m + (1 if with_l else 0))
    for e in allowed:
        upper[e] = 1.0
    if with_l:
        upper[m] = np.inf
    return lower, upper


def _scenario_rows(costs: np.ndarray, L: Optional[float], allowed, l_index: Optional[int]) -> List[LpRow]:
    rows = []
    allowed = sorted(allowed)
    for k in range(costs.shape[0]):
        coefs = [(e, float(costs[k, e])) for e in allowed if costs[k, e] != 0]
        if L is None:
            rows.append(LpRow(tuple(coefs) + ((l_index, -1.0),), LE, 0.0, f"scenario{k}"))
        else:
            rows.append(LpRow(tuple(coefs), LE, float(L), f"scenario{k}"))
    return rows


def _resolve_allowed(instance: Instance, L, allowed):
    if allowed is not None:
        return frozenset(allowed)
    if L is None:
        return frozenset(range(instance.m))
    return edge_filter(instance, L)


def build_sp_model(instance: Instance, L=None, allowed=None) -> LpModel:
    """
    Flow formulation of LP(L): scenario budget rows at level L, one unit
    leaving s and entering t, conservation elsewhere. With L=None the level
    becomes a variable to minimise.
    """
    if instance.kind != ProblemKind.SHORTEST_PATH:
        raise ValueError("build_sp_model needs a shortest path instance")
    m = instance.m
    allowed = set(_resolve_allowed(instance, L, allowed))
    # arcs into s or out of t never lie on a simple s-t path
    allowed -= {e for e, (u, v) in enumerate(instance.edges) if v == instance.s or u == instance.t}
    with_l = L is None
    lower, upper = _edge_bounds(m, allowed, with_l)
    l_index = m if with_l else None
    rows = _scenario_rows(instance.cost_matrix, None if with_l else L, allowed, l_index)

    out_arcs: Dict[int, List[int]] = {v: [] for v in range(instance.n)}
    in_arcs: Dict[int, List[int]] = {v: [] for v in range(instance.n)}
    for e, (u, v) in enumerate(instance.edges):
        out_arcs[u].append(e)
        in_arcs[v].append(e)
    rows.append(LpRow(tuple((e, 1.0) for e in out_arcs[instance.s]), EQ, 1.0, "source"))
    rows.append(LpRow(tuple((e, 1.0) for e in in_arcs[instance.t]), EQ, 1.0, "target"))
    for v in range(instance.n):
        if v in (instance.s, instance.t) or not (in_arcs[v] or out_arcs[v]):
            continue
        coefs = tuple((e, 1.0) for e in in_arcs[v]) + tuple((e, -1.0) for e in out_arcs[v])
        rows.append(LpRow(coefs, EQ, 0.0, f"balance{v}"))

    objective = {m: 1.0} if with_l else None
    return LpModel(m + (1 if with_l else 0), rows, lower, upper, objective, LazyFamily.NONE, instance, l_index)


def build_mst_model(instance: Instance, L=None, allowed=None) -> LpModel:
    """Cut-set formulation core: scenario rows, sum x = n-1, cuts separated lazily."""
    if instance.kind != ProblemKind.SPANNING_TREE:
        raise ValueError("build_mst_model needs a spanning tree instance")
    m = instance.m
    allowed = _resolve_allowed(instance, L, allowed)
    with_l = L is None
    lower, upper = _edge_bounds(m, allowed, with_l)
    l_index = m if with_l else None
    rows = _scenario_rows(instance.cost_matrix, None if with_l else L, allowed, l_index)
    rows.append(LpRow(tuple((e, 1.0) for e in range(m)), EQ, float(instance.n - 1), "cardinality"))
    objective = {m: 1.0} if with_l else None
    return LpModel(m + (1 if with_l else 0), rows, lower, upper, objective,
                   LazyFamily.SPANNING_CUTS, instance, l_index)


def build_model(instance: Instance, L=None, allowed=None) -> LpModel:
    if instance.is_sp:
        return build_sp_model(instance, L, allowed)
    return build_mst_model(instance, L, allowed)


def build_selection_model(costs: np.ndarray, groups: Optional[Sequence[Sequence[int]]] = None,
                          p: Optional[int] = None, L=None, allowed=None) -> LpModel:
    """
    Relaxation of Min-Max RS (one element per group, `groups` given) or
    Min-Max SI (exactly `p` elements).
    """
    costs = np.asarray(costs, dtype=float)
    m = costs.shape[1]
    if allowed is None:
        allowed = range(m) if L is None else [e for e in range(m) if costs[:, e].max() <= L]
    allowed = frozenset(allowed)
    with_l = L is None
    lower, upper = _edge_bounds(m, allowed, with_l)
    l_index = m if with_l else None
    rows = _scenario_rows(costs, None if with_l else L, allowed, l_index)
    if groups is not None:
        for i, group in enumerate(groups):
            rows.append(LpRow(tuple((e, 1.0) for e in group), EQ, 1.0, f"group{i}"))
    elif p is not None:
        rows.append(LpRow(tuple((e, 1.0) for e in range(m)), EQ, float(p), "cardinality"))
    else:
        raise ValueError("either groups or p is required")
    objective = {m: 1.0} if with_l else None
    return LpModel(m + (1 if with_l else 0), rows, lower, upper, objective, LazyFamily.NONE, None, l_index)


# --- Separation ---

def _weighted_graph(instance: Instance, x: np.ndarray) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(range(instance.n))
    for e, (u, v) in enumerate(instance.edges):
        w = max(float(x[e]), 0.0)
        if g.has_edge(u, v):
            g[u][v]["weight"] += w
        else:
            g.add_edge(u, v, weight=w)
    return g


def cut_value(instance: Instance, x: Sequence, side) -> float:
    side = set(side)
    return float(sum(x[e] for e, (u, v) in enumerate(instance.edges) if (u in side) != (v in side)))


def cut_edges(instance: Instance, side) -> Tuple[int, ...]:
    side = set(side)
    return tuple(e for e, (u, v) in enumerate(instance.edges) if (u in side) != (v in side))


def separate_spanning_cuts(instance: Instance, x: Sequence, tol: float = DEFAULT_SETTINGS.separation_tol
                           ) -> SeparationResult:
    """
    Global minimum cut of the x-weighted graph (Stoer-Wagner). A cut of
    weight below 1 is a violated cut-set row.
    """
    x = np.asarray(x, dtype=float)
    if instance.n < 2:
        return SeparationResult(SeparationStatus.ALL_SATISFIED)
    g = _weighted_graph(instance, x)
    if not nx.is_connected(g):
        side = min(nx.connected_components(g), key=min)
        return SeparationResult(SeparationStatus.VIOLATED, frozenset(side), cut_edges(instance, side), 1.0)

    _, (part_a, part_b) = nx.stoer_wagner(g, weight="weight")
    side = min((part_a, part_b), key=lambda part: (len(part), min(part)))
    value = cut_value(instance, x, side)
    violation = 1.0 - value
    if violation > tol:
        return SeparationResult(SeparationStatus.VIOLATED, frozenset(side), cut_edges(instance, side), violation)
    return SeparationResult(SeparationStatus.ALL_SATISFIED, frozenset(side), cut_edges(instance, side), violation)


# --- Solving ---

def _dense(model: LpModel, rows: Sequence[LpRow]):
    A = np.zeros((len(rows), model.num_vars))
    for r, row in enumerate(rows):
        for var, coef in row.coefs:
            A[r, var] += coef
    relations = [row.relation for row in rows]
    b = np.array([row.rhs for row in rows], dtype=float)
    return A, relations, b


def _cost_vector(model: LpModel) -> np.ndarray:
    c = np.zeros(model.num_vars)
    for var, coef in (model.objective or {}).items():
        c[var] = coef
    return c


def max_residual(model: LpModel, rows: Sequence[LpRow], x: np.ndarray) -> float:
    worst = 0.0
    for row in rows:
        lhs = sum(coef * x[var] for var, coef in row.coefs)
        if row.relation == LE:
            worst = max(worst, lhs - row.rhs)
        elif row.relation == GE:
            worst = max(worst, row.rhs - lhs)
        else:
            worst = max(worst, abs(lhs - row.rhs))
    return worst


def solve_model(model: LpModel, settings: LpSettings = DEFAULT_SETTINGS, cut_cap: Optional[int] = None
                ) -> LpSolution:
    """
    Solve the explicit rows; with a lazy family attached, iterate
    solve -> separate -> add row until no cut is violated.
    """
    model.validate()
    rows = list(model.rows)
    cuts: List[LpRow] = []
    instance = model.instance
    if cut_cap is None and instance is not None:
        cut_cap = settings.cut_cap_factor * instance.m * instance.n
    cost = _cost_vector(model)
    pivots = 0
    while True:
        A, relations, b = _dense(model, rows)
        num_cols = A.shape[1]
        bland_after = 2 * (num_cols + (instance.K if instance is not None else len(rows)))
        result = BoundedSimplex(A, relations, b, model.lower, model.upper, cost,
                                tol=settings.feasibility_tol, bland_after=bland_after, trace=_TRACE).solve()
        pivots += result.pivots
        if result.status != LpStatus.OPTIMAL:
            logger.debug(f"LP infeasible after {len(cuts)} cuts")
            return LpSolution(False, cuts=cuts, pivots=pivots)
        x = result.x
        if model.lazy_family == LazyFamily.SPANNING_CUTS:
            sep = separate_spanning_cuts(instance, x[: instance.m], settings.separation_tol)
            if sep.status == SeparationStatus.VIOLATED:
                row = sep.as_row()
                cuts.append(row)
                rows.append(row)
                if _TRACE is not None:
                    _TRACE.emit("cut", side=sorted(sep.cut), violation=sep.violation)
                logger.debug(f"Added cut {sorted(sep.cut)} with violation {sep.violation:.3e}")
                if cut_cap is not None and len(cuts) > cut_cap:
                    raise IterationLimitError(f"cutting plane loop exceeded {cut_cap} cuts")
                continue
        residual = max_residual(model, rows, x)
        if residual > 1e-7:
            logger.warning(f"LP certificate residual {residual:.2e} exceeds tolerance")
        return LpSolution(True, x, float(cost @ x), cuts, pivots)


def solve_feasibility(model: LpModel, settings: LpSettings = DEFAULT_SETTINGS, cut_cap: Optional[int] = None
                      ) -> LpSolution:
    """Feasible(x) / Infeasible for LP(L) at a fixed level (objective ignored)."""
    feasibility_model = LpModel(model.num_vars, model.rows, model.lower, model.upper, None,
                                model.lazy_family, model.instance, model.l_index)
    return solve_model(feasibility_model, settings, cut_cap)


# --- L* search ---

def _breakpoint_search(values: Sequence[Fraction], build: Callable[[FrozenSet[int]], LpModel],
                       settings: LpSettings):
    """
    Smallest L for which LP(L) is feasible. E(L) only changes at the
    distinct per-element maxima; inside interval j the edge set is fixed and
    the LP "minimise L" gives the optimum. Interval feasibility is monotone
    in j, so the intervals are binary searched.
    """
    breakpoints = sorted(set(values))
    solved: Dict[int, Optional[LpSolution]] = {}

    def solve_interval(j: int) -> Optional[LpSolution]:
        if j not in solved:
            allowed = frozenset(e for e, v in enumerate(values) if v <= breakpoints[j])
            solution = solve_model(build(allowed), settings)
            solved[j] = solution if solution.feasible else None
            logger.debug(f"Breakpoint {breakpoints[j]}: "
                         f"{'L_opt=%.9f' % solution.objective if solution.feasible else 'infeasible'}")
        return solved[j]

    def admits(j: int) -> bool:
        solution = solve_interval(j)
        if solution is None:
            return False
        if j == len(breakpoints) - 1:
            return True
        return solution.objective <= float(breakpoints[j + 1]) + settings.feasibility_tol

    j = bisect.bisect_left(range(len(breakpoints)), True, key=admits)
    if j == len(breakpoints):
        raise NoFeasibleL("LP(L) is infeasible even with every edge allowed")
    solution = solve_interval(j)
    lower = breakpoints[j]
    if solution.objective <= float(lower) + settings.feasibility_tol:
        bound = Fraction(lower)
    else:
        bound = Fraction(solution.objective).limit_denominator(settings.denominator_limit)
        if abs(float(bound) - solution.objective) > settings.feasibility_tol:
            bound = Fraction(solution.objective)
    return bound, solution


def _tight(costs: np.ndarray, x: np.ndarray, bound: float, tol: float) -> Tuple[int, ...]:
    loads = costs @ x
    return tuple(int(k) for k in np.flatnonzero(loads >= bound - max(tol, 1e-7)))


def minimize_L(instance: Instance, settings: LpSettings = DEFAULT_SETTINGS) -> Tuple[Fraction, FractionalSolution]:
    """L* and an optimal x* of LP(L*)."""
    bound, solution = _breakpoint_search(
        instance.max_costs, lambda allowed: build_model(instance, None, allowed), settings
    )
    x = np.clip(solution.x[: instance.m], 0.0, 1.0)
    x[x < SUPPORT_EPS] = 0.0
    exact = snap_certificate(instance, x, bound, settings)
    tight = _tight(instance.cost_matrix, x, float(bound), settings.feasibility_tol)
    logger.info(f"{instance.name or 'instance'}: L* = {bound} ({len(solution.cuts)} cuts, {solution.pivots} pivots)")
    return bound, FractionalSolution(x, bound, tight, exact)


def minimize_selection_L(costs: np.ndarray, groups: Optional[Sequence[Sequence[int]]] = None,
                         p: Optional[int] = None, settings: LpSettings = DEFAULT_SETTINGS
                         ) -> Tuple[float, np.ndarray]:
    """L* and x* for the Min-Max RS (groups) / SI (p) relaxation."""
    costs = np.asarray(costs, dtype=float)
    m = costs.shape[1]
    values = [Fraction(float(costs[:, e].max())) for e in range(m)]
    bound, solution = _breakpoint_search(
        values, lambda allowed: build_selection_model(costs, groups, p, None, allowed), settings
    )
    x = np.clip(solution.x[:m], 0.0, 1.0)
    x[x < SUPPORT_EPS] = 0.0
    return float(bound), x


# --- Exact certificate check ---

def snap_certificate(instance: Instance, x: np.ndarray, L: Fraction, settings: LpSettings = DEFAULT_SETTINGS
                     ) -> Optional[Tuple[Fraction, ...]]:
    """Rational rounding of x if it satisfies LP(L) exactly, else None."""
    snapped = tuple(Fraction(float(v)).limit_denominator(settings.denominator_limit) for v in x)
    return snapped if verify_certificate_exact(instance, snapped, L) else None


def verify_certificate_exact(instance: Instance, x: Sequence[Fraction], L) -> bool:
    """
    Check every row of LP(L) in rational arithmetic. Cut-set rows are
    enumerated exhaustively up to 16 nodes and checked on the Stoer-Wagner
    minimum cut beyond that.
    """
    L = Fraction(L)
    x = [Fraction(v) for v in x]
    if any(v < 0 or v > 1 for v in x):
        return False
    allowed = edge_filter(instance, L)
    if any(v != 0 and e not in allowed for e, v in enumerate(x)):
        return False
    for row in instance.scenarios:
        if sum((c * v for c, v in zip(row, x) if v), Fraction(0)) > L:
            return False

    if instance.is_sp:
        balance = [Fraction(0)] * instance.n
        for e, (u, v) in enumerate(instance.edges):
            balance[u] -= x[e]
            balance[v] += x[e]
        out_s = sum((x[e] for e, (u, _) in enumerate(instance.edges) if u == instance.s), Fraction(0))
        in_t = sum((x[e] for e, (_, v) in enumerate(instance.edges) if v == instance.t), Fraction(0))
        if out_s != 1 or in_t != 1:
            return False
        return all(balance[v] == 0 for v in range(instance.n) if v not in (instance.s, instance.t))

    if sum(x, Fraction(0)) != instance.n - 1:
        return False
    if instance.n <= 16:
        others = range(1, instance.n)
        for size in range(0, instance.n - 1):
            for rest in itertools.combinations(others, size):
                side = {0, *rest}
                crossing = sum((x[e] for e, (u, v) in enumerate(instance.edges) if (u in side) != (v in side)),
                               Fraction(0))
                if crossing < 1:
                    return False
        return True
    sep = separate_spanning_cuts(instance, np.array([float(v) for v in x]), tol=0.0)
    crossing = sum((x[e] for e in sep.cut_edges), Fraction(0))
    return crossing >= 1


# --- Flow post-processing ---

def flow_cost(instance: Instance, x: np.ndarray) -> float:
    return float((instance.cost_matrix @ x).max())


def _support_graph(instance: Instance, x: np.ndarray, eps: float) -> nx.MultiDiGraph:
    g = nx.MultiDiGraph()
    g.add_nodes_from(range(instance.n))
    for e, (u, v) in enumerate(instance.edges):
        if x[e] > eps:
            g.add_edge(u, v, key=e)
    return g


def remove_cycles(instance: Instance, x: Sequence, eps: float = SUPPORT_EPS) -> np.ndarray:
    """Cancel directed cycles of the flow support; the max scenario cost cannot grow."""
    x = np.array(x, dtype=float)
    before = flow_cost(instance, x)
    g = _support_graph(instance, x, eps)
    cancelled = 0
    while True:
        try:
            cycle = nx.find_cycle(g, orientation="original")
        except nx.NetworkXNoCycle:
            break
        arcs = [key for _, _, key, _ in cycle]
        delta = min(x[e] for e in arcs)
        for e in arcs:
            x[e] -= delta
            if x[e] <= eps:
                x[e] = 0.0
                u, v = instance.edges[e]
                g.remove_edge(u, v, key=e)
        cancelled += 1
    after = flow_cost(instance, x)
    if after > before + 1e-9:
        raise InvariantViolation(f"cycle removal raised the max scenario cost {before} -> {after}")
    if cancelled:
        logger.debug(f"Cancelled {cancelled} flow cycles")
    return x


@dataclass
class SeriesReduction:
    instance: Instance
    x: np.ndarray
    arc_map: Tuple[Tuple[int, ...], ...]
    node_map: Tuple[int, ...]

    def expand(self, arcs: Sequence[int]) -> List[int]:
        """Original arc ids behind a set of reduced arcs."""
        return sorted(e for a in arcs for e in self.arc_map[a])


def series_reduce(instance: Instance, x: Sequence, eps: float = SUPPORT_EPS) -> SeriesReduction:
    """
    Merge series arcs f=(u,v), g=(v,w) at every internal node with one
    incoming and one outgoing support arc into a single arc with summed costs.
    """
    x = np.asarray(x, dtype=float)
    arcs: Dict[int, dict] = {}
    for e, (u, v) in enumerate(instance.edges):
        if x[e] > eps:
            arcs[e] = {"tail": u, "head": v, "costs": list(instance.edge_costs(e)), "orig": [e], "x": float(x[e])}
    ins: Dict[int, set] = {v: set() for v in range(instance.n)}
    outs: Dict[int, set] = {v: set() for v in range(instance.n)}
    for key, arc in arcs.items():
        outs[arc["tail"]].add(key)
        ins[arc["head"]].add(key)

    next_key = instance.m
    changed = True
    while changed:
        changed = False
        for v in range(instance.n):
            if v in (instance.s, instance.t) or len(ins[v]) != 1 or len(outs[v]) != 1:
                continue
            f_key, g_key = next(iter(ins[v])), next(iter(outs[v]))
            f, g = arcs.pop(f_key), arcs.pop(g_key)
            if abs(f["x"] - g["x"]) > 1e-7:
                raise InvariantViolation(f"series arcs {f['orig']} / {g['orig']} carry unequal flow")
            merged = {
                "tail": f["tail"], "head": g["head"],
                "costs": [a + b for a, b in zip(f["costs"], g["costs"])],
                "orig": f["orig"] + g["orig"], "x": f["x"],
            }
            ins[v].clear()
            outs[v].clear()
            outs[f["tail"]].discard(f_key)
            ins[g["head"]].discard(g_key)
            arcs[next_key] = merged
            outs[merged["tail"]].add(next_key)
            ins[merged["head"]].add(next_key)
            next_key += 1
            changed = True

    kept_nodes = sorted({instance.s, instance.t} | {a["tail"] for a in arcs.values()} | {a["head"] for a in arcs.values()})
    relabel = {v: i for i, v in enumerate(kept_nodes)}
    ordered = sorted(arcs.values(), key=lambda a: min(a["orig"]))
    edges = tuple((relabel[a["tail"]], relabel[a["head"]]) for a in ordered)
    scenarios = tuple(tuple(a["costs"][k] for a in ordered) for k in range(instance.K))
    reduced = Instance(ProblemKind.SHORTEST_PATH, len(kept_nodes), edges, scenarios,
                       relabel[instance.s], relabel[instance.t], f"{instance.name}:reduced")
    logger.debug(f"Series reduction: {instance.m} arcs -> {len(edges)} arcs, "
                 f"{instance.n} nodes -> {len(kept_nodes)} nodes")
    return SeriesReduction(
        reduced,
        np.array([a["x"] for a in ordered], dtype=float),
        tuple(tuple(a["orig"]) for a in ordered),
        tuple(kept_nodes),
    )
