"""
Exact min-max optimum by enumeration: simple s-t paths for shortest path
instances, spanning trees by deletion/contraction for spanning tree
instances. Used as ground truth for the approximation algorithms.
"""

import logging
import math
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from src.instance_model import DiscreteSolution, EnumerationLimitError, Instance, NoFeasibleL, evaluate

logger = logging.getLogger(__name__)

DEFAULT_LIMIT = 10 ** 6


def integer_costs(instance: Instance) -> np.ndarray:
    """K x m matrix of costs scaled by the common denominator."""
    scale = 1
    for row in instance.scenarios:
        for c in row:
            scale = math.lcm(scale, c.denominator)
    values = [[int(c * scale) for c in row] for row in instance.scenarios]
    largest = max((v for row in values for v in row), default=0)
    dtype = np.int64 if largest * max(instance.m, 1) < 2 ** 62 else object
    return np.array(values, dtype=dtype).reshape(instance.K, instance.m)


def brute_force_opt(instance: Instance, limit: int = DEFAULT_LIMIT) -> DiscreteSolution:
    """Exact optimum; raises EnumerationLimitError instead of guessing past `limit`."""
    if instance.is_sp:
        edges = _best_path(instance, limit)
    else:
        edges = _best_tree(instance, limit)
    solution = evaluate(instance, edges)
    logger.debug(f"Exact optimum of {instance.name or 'instance'}: {solution.max_cost}")
    return solution


def _best_path(instance: Instance, limit: int) -> List[int]:
    costs = integer_costs(instance)
    best: Optional[Tuple[int, List[int]]] = None
    count = 0
    for path in nx.all_simple_edge_paths(instance.graph(), instance.s, instance.t):
        count += 1
        if count > limit:
            raise EnumerationLimitError(f"more than {limit} simple s-t paths")
        arcs = sorted(key for _, _, key in path)
        value = costs[:, arcs].sum(axis=1).max()
        if best is None or (value, arcs) < best:
            best = (value, arcs)
    if best is None:
        raise NoFeasibleL(f"no path from {instance.s} to {instance.t}")
    return best[1]


class _TreeSearch:
    """
    Include/exclude recursion over edge ids. A branch is cut when the chosen
    edges already cost at least the incumbent or when the remaining edges can
    no longer connect the components.
    """

    def __init__(self, instance: Instance, limit: int):
        self.instance = instance
        self.limit = limit
        self.costs = integer_costs(instance)
        self.explored = 0
        self.best_value = None
        self.best_edges: Optional[List[int]] = None

    def run(self) -> List[int]:
        self._visit(0, list(range(self.instance.n)), [], np.zeros(self.instance.K, dtype=self.costs.dtype))
        return self.best_edges

    def _connectable(self, start: int, labels: Sequence[int]) -> bool:
        uf = nx.utils.UnionFind(set(labels))
        for u, v in self.instance.edges[start:]:
            uf.union(labels[u], labels[v])
        return len(list(uf.to_sets())) == 1

    def _visit(self, index: int, labels: List[int], chosen: List[int], load: np.ndarray):
        self.explored += 1
        if self.explored > self.limit:
            raise EnumerationLimitError(f"spanning tree search exceeded {self.limit} nodes")
        value = load.max() if len(load) else 0
        if self.best_value is not None and value >= self.best_value:
            return
        if len(chosen) == self.instance.n - 1:
            self.best_value, self.best_edges = value, list(chosen)
            return
        if index == self.instance.m or not self._connectable(index, labels):
            return
        u, v = self.instance.edges[index]
        if labels[u] != labels[v]:
            keep, drop = labels[u], labels[v]
            merged = [keep if label == drop else label for label in labels]
            self._visit(index + 1, merged, chosen + [index], load + self.costs[:, index])
        self._visit(index + 1, labels, chosen, load)


def _best_tree(instance: Instance, limit: int) -> List[int]:
    search = _TreeSearch(instance, limit)
    edges = search.run()
    logger.debug(f"Spanning tree search explored {search.explored} nodes")
    return edges


def count_spanning_trees(instance: Instance) -> int:
    """Kirchhoff's matrix-tree theorem on the multigraph Laplacian."""
    if instance.n == 1:
        return 1
    laplacian = np.zeros((instance.n, instance.n))
    for u, v in instance.edges:
        laplacian[u, u] += 1
        laplacian[v, v] += 1
        laplacian[u, v] -= 1
        laplacian[v, u] -= 1
    return int(round(np.linalg.det(laplacian[1:, 1:])))


def optimum_value(instance: Instance, limit: int = DEFAULT_LIMIT) -> Fraction:
    return brute_force_opt(instance, limit).max_cost
