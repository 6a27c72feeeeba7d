"""
Domain types for min-max scenario instances: the instance itself, fractional
and discrete solutions, run reports, the canonical JSON instance format and
the exception hierarchy shared by every solver module.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)


# --- Exceptions ---

class InstanceError(ValueError):
    """Schema or validation failure; `path` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


class InfeasibleSolutionError(ValueError):
    """An edge set is not a path / spanning tree; `witness` says why."""

    def __init__(self, message: str, witness: Optional[Dict] = None):
        super().__init__(message)
        self.witness = witness or {}


class NoFeasibleL(ValueError):
    pass


class IterationLimitError(RuntimeError):
    pass


class RoundingError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class SolverFailure(RuntimeError):
    def __init__(self, message: str, report: Optional["RunReport"] = None):
        super().__init__(message)
        self.report = report


class InvariantViolation(AssertionError):
    pass


class EnumerationLimitError(RuntimeError):
    pass


# --- Domain types ---

class ProblemKind(str, Enum):
    SHORTEST_PATH = "sp"
    SPANNING_TREE = "mst"


Cost = Fraction


@dataclass(frozen=True)
class Instance:
    """
    A graph with K scenario cost vectors.

    Edges are (tail, head) arcs for shortest path instances and unordered
    (endpointA, endpointB) pairs for spanning tree instances. Edge ids are
    the positions in `edges`; scenarios[k][e] is the cost of edge e under
    scenario k.
    """
    kind: ProblemKind
    n: int
    edges: Tuple[Tuple[int, int], ...]
    scenarios: Tuple[Tuple[Cost, ...], ...]
    s: Optional[int] = None
    t: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        validate_instance(self)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def K(self) -> int:
        return len(self.scenarios)

    @property
    def is_sp(self) -> bool:
        return self.kind == ProblemKind.SHORTEST_PATH

    @cached_property
    def cost_matrix(self) -> np.ndarray:
        """K x m float matrix, for the LP engine and the estimators."""
        return np.array([[float(c) for c in row] for row in self.scenarios], dtype=float).reshape(self.K, self.m)

    @cached_property
    def max_costs(self) -> Tuple[Cost, ...]:
        """Per-edge maximum cost over all scenarios."""
        return tuple(max(row[e] for row in self.scenarios) for e in range(self.m))

    def edge_costs(self, e: int) -> Tuple[Cost, ...]:
        return tuple(row[e] for row in self.scenarios)

    def graph(self) -> Union[nx.MultiDiGraph, nx.MultiGraph]:
        """Multigraph keyed by edge id."""
        g = nx.MultiDiGraph() if self.is_sp else nx.MultiGraph()
        g.add_nodes_from(range(self.n))
        for e, (u, v) in enumerate(self.edges):
            g.add_edge(u, v, key=e)
        return g


def validate_instance(instance: Instance) -> None:
    if instance.n < 1:
        raise InstanceError(f"node count must be positive, got {instance.n}", "n")
    if instance.K < 1:
        raise InstanceError("at least one scenario is required", "scenarios")
    for e, (u, v) in enumerate(instance.edges):
        for pos, node in enumerate((u, v)):
            if not 0 <= node < instance.n:
                raise InstanceError(f"dangling endpoint {node} at edges[{e}][{pos}]", f"edges[{e}][{pos}]")
        if u == v:
            raise InstanceError(f"self-loop at edges[{e}]", f"edges[{e}]")
    for k, row in enumerate(instance.scenarios):
        if len(row) != instance.m:
            raise InstanceError(
                f"scenario {k} has {len(row)} costs, expected {instance.m}", f"scenarios[{k}]"
            )
        for e, c in enumerate(row):
            if c < 0:
                raise InstanceError(f"negative cost at scenarios[{k}][{e}]", f"scenarios[{k}][{e}]")
    if instance.is_sp:
        for label in ("s", "t"):
            node = getattr(instance, label)
            if node is None:
                raise InstanceError(f"shortest path instance needs '{label}'", label)
            if not 0 <= node < instance.n:
                raise InstanceError(f"'{label}'={node} outside [0, {instance.n})", label)
        if instance.s == instance.t:
            raise InstanceError("source equals target", "t")
    else:
        if instance.s is not None or instance.t is not None:
            raise InstanceError("'s'/'t' are only allowed for kind 'sp'", "s")
        uf = nx.utils.UnionFind(range(instance.n))
        for u, v in instance.edges:
            uf.union(u, v)
        groups = list(uf.to_sets())
        if len(groups) > 1:
            stray = sorted(min(groups, key=min))
            raise InstanceError(f"spanning tree graph is disconnected (component {stray})", "edges")


@dataclass(frozen=True, eq=False)
class FractionalSolution:
    """Optimal point of LP(L*): `x` per edge, `bound` = L*."""
    x: np.ndarray
    bound: Fraction
    tight_scenarios: Tuple[int, ...] = ()
    exact_x: Optional[Tuple[Fraction, ...]] = None

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(int(e) for e in np.flatnonzero(self.x > SUPPORT_EPS))


SUPPORT_EPS = 1e-9


@dataclass(frozen=True)
class DiscreteSolution:
    edges: Tuple[int, ...]
    per_scenario_cost: Tuple[Fraction, ...]
    max_cost: Fraction


@dataclass
class RunReport:
    algorithm: str
    rounds: int = 0
    selections: List[List[int]] = field(default_factory=list)
    lower_bound: Optional[Fraction] = None
    max_cost: Optional[Fraction] = None
    rng_seed: Optional[int] = None
    wall_time: float = 0.0
    details: Dict = field(default_factory=dict)

    @property
    def ratio(self) -> Optional[float]:
        if self.lower_bound is None or self.max_cost is None:
            return None
        return cost_ratio(self.max_cost, self.lower_bound)


def cost_ratio(value: Fraction, bound: Fraction) -> float:
    if bound == 0:
        return 1.0 if value == 0 else float("inf")
    return float(Fraction(value) / Fraction(bound))


# --- Evaluation ---

def evaluate(instance: Instance, edge_set: Sequence[int]) -> DiscreteSolution:
    """
    Exact per-scenario cost of a path (SP) or spanning tree (MST).
    Raises InfeasibleSolutionError with a witness if the set is neither.
    """
    edges = sorted(int(e) for e in edge_set)
    if len(set(edges)) != len(edges):
        raise InfeasibleSolutionError("duplicate edge ids", {"kind": "duplicate", "edges": edges})
    for e in edges:
        if not 0 <= e < instance.m:
            raise InfeasibleSolutionError(f"unknown edge id {e}", {"kind": "unknown", "edges": [e]})

    if instance.is_sp:
        _check_path(instance, edges)
    else:
        _check_tree(instance, edges)

    per_scenario = tuple(sum((row[e] for e in edges), Fraction(0)) for row in instance.scenarios)
    return DiscreteSolution(tuple(edges), per_scenario, max(per_scenario))


def _find_cycle_edges(instance: Instance, edges: Sequence[int]) -> Optional[List[int]]:
    g = nx.MultiDiGraph() if instance.is_sp else nx.MultiGraph()
    for e in edges:
        u, v = instance.edges[e]
        g.add_edge(u, v, key=e)
    try:
        cycle = nx.find_cycle(g)
    except nx.NetworkXNoCycle:
        return None
    return sorted(c[2] for c in cycle)


def _check_path(instance: Instance, edges: List[int]) -> None:
    out_arc: Dict[int, int] = {}
    in_count: Dict[int, int] = {}
    for e in edges:
        u, v = instance.edges[e]
        if u in out_arc:
            raise InfeasibleSolutionError(
                f"node {u} has two outgoing arcs", {"kind": "branching", "node": u, "edges": [out_arc[u], e]}
            )
        out_arc[u] = e
        in_count[v] = in_count.get(v, 0) + 1
        if in_count[v] > 1:
            raise InfeasibleSolutionError(f"node {v} has two incoming arcs", {"kind": "branching", "node": v})

    visited = []
    node = instance.s
    seen = {node}
    while node in out_arc and node != instance.t:
        e = out_arc[node]
        visited.append(e)
        node = instance.edges[e][1]
        if node in seen:
            break
        seen.add(node)
    if node != instance.t or len(visited) != len(edges):
        cycle = _find_cycle_edges(instance, edges)
        if cycle:
            raise InfeasibleSolutionError(f"edge set contains a cycle {cycle}", {"kind": "cycle", "edges": cycle})
        raise InfeasibleSolutionError(
            "edge set is not a connected s-t path",
            {"kind": "disconnection", "reached": sorted(seen)},
        )


def _check_tree(instance: Instance, edges: List[int]) -> None:
    cycle = _find_cycle_edges(instance, edges)
    if cycle:
        raise InfeasibleSolutionError(f"edge set contains a cycle {cycle}", {"kind": "cycle", "edges": cycle})
    if len(edges) != instance.n - 1:
        uf = nx.utils.UnionFind(range(instance.n))
        for e in edges:
            uf.union(*instance.edges[e])
        part = sorted(min(uf.to_sets(), key=min))
        raise InfeasibleSolutionError(
            f"forest with {len(edges)} edges does not span {instance.n} nodes",
            {"kind": "disconnection", "component": part},
        )


# --- Canonical JSON ---

def _parse_cost(value, path: str) -> Fraction:
    if isinstance(value, bool):
        raise InstanceError(f"cost must be a number or 'p/q' string at {path}", path)
    try:
        if isinstance(value, int):
            cost = Fraction(value)
        elif isinstance(value, float):
            cost = Fraction(repr(value))
        elif isinstance(value, str):
            cost = Fraction(value.strip())
        else:
            raise InstanceError(f"cost must be a number or 'p/q' string at {path}", path)
    except (ValueError, ZeroDivisionError):
        raise InstanceError(f"malformed cost {value!r} at {path}", path)
    if cost < 0:
        raise InstanceError(f"negative cost at {path}", path)
    return cost


def _require(data: Dict, key: str, kind) -> object:
    if key not in data:
        raise InstanceError(f"missing field '{key}'", key)
    value = data[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise InstanceError(f"field '{key}' must be an integer", key)
    if kind is not int and not isinstance(value, kind):
        raise InstanceError(f"field '{key}' has wrong type", key)
    return value


def parse_instance(data: Union[bytes, str]) -> Instance:
    """Parse the canonical instance JSON (see README) into a validated Instance."""
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InstanceError(f"malformed JSON: {exc}")
    if not isinstance(raw, dict):
        raise InstanceError("top-level JSON value must be an object")

    kind_name = _require(raw, "kind", str)
    try:
        kind = ProblemKind(kind_name)
    except ValueError:
        raise InstanceError(f"unknown kind {kind_name!r}", "kind")
    n = _require(raw, "n", int)
    name = raw.get("name", "")
    if not isinstance(name, str):
        raise InstanceError("field 'name' must be a string", "name")

    edges = []
    for e, pair in enumerate(_require(raw, "edges", list)):
        if (not isinstance(pair, list) or len(pair) != 2
                or any(isinstance(v, bool) or not isinstance(v, int) for v in pair)):
            raise InstanceError(f"edge must be a pair of node ids at edges[{e}]", f"edges[{e}]")
        edges.append((pair[0], pair[1]))

    scenarios = []
    for k, row in enumerate(_require(raw, "scenarios", list)):
        if not isinstance(row, list):
            raise InstanceError(f"scenario must be a list at scenarios[{k}]", f"scenarios[{k}]")
        scenarios.append(tuple(_parse_cost(c, f"scenarios[{k}][{e}]") for e, c in enumerate(row)))

    s = t = None
    if kind == ProblemKind.SHORTEST_PATH:
        s = _require(raw, "s", int)
        t = _require(raw, "t", int)
    elif "s" in raw or "t" in raw:
        raise InstanceError("'s'/'t' are only allowed for kind 'sp'", "s")

    return Instance(kind, n, tuple(edges), tuple(scenarios), s, t, name)


def format_cost(cost: Fraction) -> Union[int, str]:
    return cost.numerator if cost.denominator == 1 else f"{cost.numerator}/{cost.denominator}"


def instance_to_dict(instance: Instance) -> Dict:
    data = {
        "kind": instance.kind.value,
        "name": instance.name,
        "n": instance.n,
        "edges": [[u, v] for u, v in instance.edges],
        "scenarios": [[format_cost(c) for c in row] for row in instance.scenarios],
    }
    if instance.is_sp:
        data["s"] = instance.s
        data["t"] = instance.t
    return data


def serialize_instance(instance: Instance) -> bytes:
    """Canonical form: fixed key order, compact separators, integral costs as ints."""
    text = json.dumps(instance_to_dict(instance), separators=(",", ":"))
    return (text + "\n").encode("utf-8")


def load_instance(path: Union[str, Path]) -> Instance:
    with open(path, "rb") as f:
        return parse_instance(f.read())


def save_instance(instance: Instance, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(serialize_instance(instance))
    return path


def solution_to_dict(solution: DiscreteSolution) -> Dict:
    return {
        "edges": list(solution.edges),
        "per_scenario_cost": [format_cost(c) for c in solution.per_scenario_cost],
        "max_cost": format_cost(solution.max_cost),
    }


def _jsonable(value):
    if isinstance(value, Fraction):
        return format_cost(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return [_jsonable(v) for v in items]
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def report_to_dict(report: RunReport) -> Dict:
    ratio = report.ratio
    return {
        "algorithm": report.algorithm,
        "rounds": report.rounds,
        "selections": _jsonable(report.selections),
        "lower_bound": _jsonable(report.lower_bound),
        "max_cost": _jsonable(report.max_cost),
        "ratio": _jsonable(ratio),
        "rng_seed": report.rng_seed,
        "wall_time": report.wall_time,
        "details": _jsonable(report.details),
    }
