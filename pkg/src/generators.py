"""
Instance generators: the integrality-gap families for min-max shortest path
and spanning tree, the crossing-spanning-tree adapter, seeded random
instances and the golden fixture suite.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from src.instance_model import Instance, InvariantViolation, ProblemKind, save_instance

logger = logging.getLogger(__name__)

MAX_MATRIX_ENTRIES = 10 ** 7
COST_DISTRIBUTIONS = ("uniform", "integer", "binary")

ONE = Fraction(1)
ZERO = Fraction(0)


class ParameterError(ValueError):
    """Generator parameters outside the supported range."""


def _guard_size(K: int, m: int):
    if K * m > MAX_MATRIX_ENTRIES:
        raise ParameterError(f"scenario matrix would hold {K * m} entries (limit {MAX_MATRIX_ENTRIES})")


# --- Shortest path gap family ---

@dataclass(frozen=True)
class GapSpShape:
    r: int

    @property
    def k(self) -> int:
        """Solid arcs on every s-t path."""
        return 2 ** (self.r + 1)

    @property
    def K(self) -> int:
        return 4 ** (self.k - 1)

    @property
    def m(self) -> int:
        return (7 * self.k ** 2 - 4) // 3

    @property
    def n(self) -> int:
        return 2 + 5 * (self.k ** 2 - 1) // 3


# Base graph on s=0, a=1, b=2, c=3, d=4, g=5, t=6: (tail, head, solid index or None)
_SP_SKELETON = (
    (0, 1, 0),     # e1
    (0, 2, 1),     # e2
    (1, 3, None),  # f1
    (2, 3, None),  # f2
    (3, 4, 2),     # e3
    (3, 5, 3),     # e4
    (4, 6, None),  # f3
    (5, 6, None),  # f4
)


def _gap_sp_block(r: int):
    """(n, s, t, edges, scenario rows) of the level-r graph; level -1 is one solid arc."""
    if r < 0:
        return 2, 0, 1, [(0, 1)], [[ONE]]
    sub_n, sub_s, sub_t, sub_edges, sub_rows = _gap_sp_block(r - 1)
    n = 7
    edges: List[Tuple[int, int]] = []
    copies: List[range] = [range(0)] * 4
    for tail, head, solid in _SP_SKELETON:
        if solid is None:
            edges.append((tail, head))
            continue
        mapping = {sub_s: tail, sub_t: head}
        for v in range(sub_n):
            if v not in mapping:
                mapping[v] = n
                n += 1
        start = len(edges)
        edges.extend((mapping[u], mapping[v]) for u, v in sub_edges)
        copies[solid] = range(start, len(edges))

    rows = []
    for i in (0, 1):
        for j in (2, 3):
            for alpha in sub_rows:
                for beta in sub_rows:
                    row = [ZERO] * len(edges)
                    for pos, e in enumerate(copies[i]):
                        row[e] = alpha[pos]
                    for pos, e in enumerate(copies[j]):
                        row[e] = beta[pos]
                    rows.append(row)
    return n, 0, 6, edges, rows


def gen_gap_sp(r: int) -> Instance:
    """
    Level-r gap instance: every s-t path carries 2^(r+1) solid arcs and some
    scenario charges all of them, while the half-half flow costs 1 everywhere.
    """
    if not 0 <= r <= 2:
        raise ParameterError(f"gap-sp level r must be in [0, 2], got {r}")
    shape = GapSpShape(r)
    _guard_size(shape.K, shape.m)
    n, s, t, edges, rows = _gap_sp_block(r)
    if (n, len(edges), len(rows)) != (shape.n, shape.m, shape.K):
        raise InvariantViolation(f"gap-sp r={r} has (n, m, K) = {(n, len(edges), len(rows))}, "
                                 f"expected {(shape.n, shape.m, shape.K)}")
    logger.debug(f"gap-sp r={r}: n={n}, m={len(edges)}, K={len(rows)}")
    return Instance(ProblemKind.SHORTEST_PATH, n, tuple(edges), tuple(tuple(row) for row in rows),
                    s, t, f"gap_sp_r{r}")


# --- Spanning tree gap family ---

@dataclass(frozen=True)
class GapMstShape:
    k: int

    @property
    def m(self) -> int:
        return 2 * self.k ** 2

    @property
    def n(self) -> int:
        return self.k ** 2 + self.k + 1

    @property
    def K(self) -> int:
        return self.k ** self.k


def gap_mst_solid_edges(k: int) -> List[int]:
    """Edge ids of the solid edges {v_i, u^i_j} in gen_gap_mst(k)."""
    return [2 * q for q in range(k * k)]


def gen_gap_mst(k: int) -> Instance:
    """
    Hubs v_1..v_(k+1) joined by k parallel two-edge routes each. A scenario
    picks one solid edge per route block; every spanning tree has a solid
    edge in each block, so some scenario charges k of them.
    """
    if not 2 <= k <= 4:
        raise ParameterError(f"gap-mst k must be in [2, 4], got {k}")
    shape = GapMstShape(k)
    _guard_size(shape.K, shape.m)
    hubs = k + 1
    edges: List[Tuple[int, int]] = []
    for i in range(k):
        for j in range(k):
            u = hubs + i * k + j
            edges.append((i, u))       # solid
            edges.append((u, i + 1))   # dashed

    dashed_nodes = {v for e, pair in enumerate(edges) if e % 2 for v in pair}
    if dashed_nodes != set(range(1, shape.n)):
        raise InvariantViolation("every node except v_1 must touch a dashed edge")

    rows = []
    for choice in np.ndindex(*([k] * k)):
        row = [ZERO] * len(edges)
        for i, j in enumerate(choice):
            row[2 * (i * k + j)] = ONE
        rows.append(tuple(row))
    if (shape.n, len(edges), len(rows)) != (hubs + k * k, shape.m, shape.K):
        raise InvariantViolation(f"gap-mst k={k} size mismatch")
    return Instance(ProblemKind.SPANNING_TREE, shape.n, tuple(edges), tuple(rows), name=f"gap_mst_k{k}")


# --- Crossing spanning tree ---

def gen_cst(graph: Union[Instance, nx.Graph], cuts: Sequence[Iterable[int]], name: str = "cst") -> Instance:
    """One 0/1 scenario per cut: cost 1 on the edges crossing it."""
    if isinstance(graph, Instance):
        n, edges = graph.n, graph.edges
    else:
        n = graph.number_of_nodes()
        if set(graph.nodes) != set(range(n)):
            raise ParameterError("graph nodes must be 0..n-1")
        edges = tuple((int(u), int(v)) for u, v in graph.edges())
    if not cuts:
        raise ParameterError("at least one cut is required")
    rows = []
    for j, cut in enumerate(cuts):
        side = set(int(v) for v in cut)
        if not side or len(side) >= n:
            raise ParameterError(f"cut {j} must be a proper nonempty node subset")
        if any(not 0 <= v < n for v in side):
            raise ParameterError(f"cut {j} names nodes outside [0, {n})")
        rows.append(tuple(ONE if (u in side) != (v in side) else ZERO for u, v in edges))
    return Instance(ProblemKind.SPANNING_TREE, n, tuple(edges), tuple(rows), name=name)


def singleton_cuts(n: int) -> List[List[int]]:
    return [[v] for v in range(n)]


# --- Random instances ---

def _random_costs(rng: np.random.Generator, K: int, m: int, cost_dist: str):
    if cost_dist == "uniform":
        draws = rng.integers(0, 1001, size=(K, m))
        return tuple(tuple(Fraction(int(c), 1000) for c in row) for row in draws)
    high = 10 if cost_dist == "integer" else 2
    draws = rng.integers(0, high, size=(K, m))
    return tuple(tuple(Fraction(int(c)) for c in row) for row in draws)


def gen_random(kind: Union[ProblemKind, str], n: int, density: float, K: int, seed: int,
               cost_dist: str = "uniform") -> Instance:
    """
    SP: layered DAG 0 -> n-1 with the chain i -> i+1 plus forward arcs.
    MST: random recursive tree plus extra edges. Each extra pair is added
    with probability `density`.
    """
    kind = ProblemKind(kind)
    if n < 2:
        raise ParameterError(f"n must be at least 2, got {n}")
    if not 0.0 <= density <= 1.0:
        raise ParameterError(f"density must lie in [0, 1], got {density}")
    if K < 1:
        raise ParameterError(f"K must be positive, got {K}")
    if cost_dist not in COST_DISTRIBUTIONS:
        raise ParameterError(f"cost distribution must be one of {COST_DISTRIBUTIONS}, got {cost_dist!r}")
    rng = np.random.default_rng(seed)

    if kind == ProblemKind.SHORTEST_PATH:
        edges = [(i, i + 1) for i in range(n - 1)]
        edges += [(i, j) for i in range(n) for j in range(i + 2, n) if rng.random() < density]
    else:
        edges = [(int(rng.integers(0, v)), v) for v in range(1, n)]
        backbone = set(edges)
        edges += [(u, v) for u in range(n) for v in range(u + 1, n)
                  if (u, v) not in backbone and rng.random() < density]
    _guard_size(K, len(edges))
    scenarios = _random_costs(rng, K, len(edges), cost_dist)
    name = f"random_{kind.value}_n{n}_K{K}_s{seed}"
    if kind == ProblemKind.SHORTEST_PATH:
        return Instance(kind, n, tuple(edges), scenarios, 0, n - 1, name)
    return Instance(kind, n, tuple(edges), scenarios, name=name)


# --- Fixture suite ---

FIXTURE_RANDOM = {"n": 8, "density": 0.3, "K": 4, "cost_dist": "uniform", "seeds": range(5)}


def fixture_instances() -> List[Instance]:
    instances = [gen_gap_sp(0), gen_gap_sp(1), gen_gap_mst(2), gen_gap_mst(3)]
    k4 = nx.complete_graph(4)
    instances.append(gen_cst(k4, singleton_cuts(4), name="cst_k4_singletons"))
    for kind in ProblemKind:
        for seed in FIXTURE_RANDOM["seeds"]:
            instances.append(gen_random(kind, FIXTURE_RANDOM["n"], FIXTURE_RANDOM["density"],
                                        FIXTURE_RANDOM["K"], seed, FIXTURE_RANDOM["cost_dist"]))
    return instances


def write_fixtures(directory: Union[str, Path]) -> List[Path]:
    """Write the golden suite as canonical JSON, one `<name>.json` per instance."""
    directory = Path(directory)
    paths = [save_instance(instance, directory / f"{instance.name}.json") for instance in fixture_instances()]
    logger.info(f"Wrote {len(paths)} fixtures to {directory}")
    return paths
