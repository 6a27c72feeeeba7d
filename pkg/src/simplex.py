"""
Dense bounded-variable primal simplex.

Solves   minimize c.x   subject to   A x (<=|==|>=) b,   lo <= x <= hi
with a two-phase method. Phase I starts from an all-artificial basis;
phase II pins the artificials to zero through their upper bound. Entering
variables follow Dantzig's rule with lowest-index ties, switching to
Bland's rule once the run of degenerate pivots exceeds `bland_after`.
"""

import json
import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import IO, Optional, Sequence

import numpy as np

from src.instance_model import IterationLimitError

logger = logging.getLogger(__name__)

LE, EQ, GE = "<=", "==", ">="


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class SimplexResult:
    status: LpStatus
    x: Optional[np.ndarray]
    objective: float
    pivots: int


class LpTrace:
    """JSON-lines sink for pivot and cut events."""

    def __init__(self, stream: IO[str]):
        self.stream = stream

    def emit(self, event: str, **fields):
        record = {"event": event, "time": round(time.time(), 6)}
        record.update(fields)
        self.stream.write(json.dumps(record) + "\n")


class BoundedSimplex:
    def __init__(
        self,
        A: np.ndarray,
        relations: Sequence[str],
        b: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        cost: Optional[np.ndarray] = None,
        tol: float = 1e-9,
        bland_after: Optional[int] = None,
        max_pivots: Optional[int] = None,
        trace: Optional[LpTrace] = None,
    ):
        self.A = np.asarray(A, dtype=float).reshape(len(relations), len(lower))
        self.relations = list(relations)
        self.b = np.asarray(b, dtype=float)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.num_vars = len(self.lower)
        self.cost = np.zeros(self.num_vars) if cost is None else np.asarray(cost, dtype=float)
        self.tol = tol
        rows, cols = self.A.shape
        self.bland_after = bland_after if bland_after is not None else 2 * (rows + cols)
        self.max_pivots = max_pivots if max_pivots is not None else 50 * (rows + cols) + 1000
        self.trace = trace
        self.pivots = 0

    # Standard form: [A | slacks | artificials], every variable shifted to lower bound 0.
    def _standard_form(self):
        rows = len(self.relations)
        shifted_b = self.b - self.A @ self.lower
        slack_cols = [i for i, rel in enumerate(self.relations) if rel != EQ]
        slack = np.zeros((rows, len(slack_cols)))
        for j, i in enumerate(slack_cols):
            slack[i, j] = 1.0 if self.relations[i] == LE else -1.0
        M = np.hstack([self.A, slack, np.eye(rows)])
        sign = np.where(shifted_b < 0, -1.0, 1.0)
        M[:, : self.num_vars + len(slack_cols)] *= sign[:, None]
        rhs = shifted_b * sign
        ub = np.concatenate([
            self.upper - self.lower,
            np.full(len(slack_cols), np.inf),
            np.full(rows, np.inf),
        ])
        return M, rhs, ub, self.num_vars + len(slack_cols)

    def solve(self) -> SimplexResult:
        if np.any(self.lower > self.upper + self.tol):
            return SimplexResult(LpStatus.INFEASIBLE, None, float("nan"), 0)
        rows = len(self.relations)
        if rows == 0:
            x = self.lower.copy()
            return SimplexResult(LpStatus.OPTIMAL, x, float(self.cost @ x), 0)

        M, rhs, ub, art_start = self._standard_form()
        N = M.shape[1]
        self._M, self._rhs = M, rhs
        self.T = M.copy()
        self.ub = ub
        self.basis = np.arange(art_start, art_start + rows)
        self.at_upper = np.zeros(N, dtype=bool)
        self.values = np.zeros(N)
        self.values[self.basis] = rhs
        self.art_start = art_start

        phase1 = np.zeros(N)
        phase1[art_start:] = 1.0
        status = self._iterate(phase1)
        infeasibility = float(self.values[art_start:].sum())
        if infeasibility > 1e-8 * max(1.0, float(np.abs(rhs).max())):
            logger.debug(f"Phase I ended with infeasibility {infeasibility:.3e}")
            self._emit("solve", status="infeasible", pivots=self.pivots, infeasibility=infeasibility)
            return SimplexResult(LpStatus.INFEASIBLE, None, float("nan"), self.pivots)

        self.ub[art_start:] = 0.0
        self.values[art_start:] = 0.0
        phase2 = np.zeros(N)
        phase2[: self.num_vars] = self.cost
        status = self._iterate(phase2)
        if status == LpStatus.UNBOUNDED:
            self._emit("solve", status="unbounded", pivots=self.pivots)
            return SimplexResult(LpStatus.UNBOUNDED, None, float("-inf"), self.pivots)

        x = self.lower + self.values[: self.num_vars]
        x = np.clip(x, self.lower, self.upper)
        objective = float(self.cost @ x)
        self._emit("solve", status="optimal", pivots=self.pivots, objective=objective)
        return SimplexResult(LpStatus.OPTIMAL, x, objective, self.pivots)

    def _emit(self, event: str, **fields):
        if self.trace is not None:
            self.trace.emit(event, **fields)

    def _recompute_basic_values(self):
        nonbasic = np.ones(len(self.values), dtype=bool)
        nonbasic[self.basis] = False
        binv = self.T[:, self.art_start:]
        residual = self._rhs - self._M[:, nonbasic] @ self.values[nonbasic]
        self.values[self.basis] = binv @ residual

    def _iterate(self, cost: np.ndarray) -> LpStatus:
        T, tol = self.T, self.tol
        d = cost - cost[self.basis] @ T
        degenerate_run = 0
        bland = False
        while True:
            is_basic = np.zeros(len(d), dtype=bool)
            is_basic[self.basis] = True
            movable = (~is_basic) & (self.ub > tol)
            can_increase = movable & ~self.at_upper & (d < -tol)
            can_decrease = movable & self.at_upper & (d > tol)
            eligible = np.flatnonzero(can_increase | can_decrease)
            if eligible.size == 0:
                self._recompute_basic_values()
                return LpStatus.OPTIMAL

            if bland:
                j = int(eligible[0])
            else:
                j = int(eligible[np.argmax(np.abs(d[eligible]))])
            direction = -1.0 if self.at_upper[j] else 1.0

            # basic values move by delta * theta
            delta = -direction * T[:, j]
            basic_values = self.values[self.basis]
            basic_ub = self.ub[self.basis]
            limits = np.full(len(delta), np.inf)
            falling = delta < -tol
            rising = (delta > tol) & np.isfinite(basic_ub)
            limits[falling] = basic_values[falling] / -delta[falling]
            limits[rising] = (basic_ub[rising] - basic_values[rising]) / delta[rising]
            limits = np.maximum(limits, 0.0)

            theta = self.ub[j]
            leave = -1
            if limits.size and np.isfinite(limits.min()):
                best = limits.min()
                if best < theta or not np.isfinite(theta):
                    ties = np.flatnonzero(limits <= best + 1e-12)
                    leave = int(ties[np.argmin(self.basis[ties])])
                    theta = limits[leave]
            if not np.isfinite(theta):
                return LpStatus.UNBOUNDED

            self.values[self.basis] += theta * delta
            self.values[j] += direction * theta

            leaving = None
            if leave < 0:
                self.at_upper[j] = not self.at_upper[j]
            else:
                leaving = int(self.basis[leave])
                hit_upper = delta[leave] > 0
                self.values[leaving] = self.ub[leaving] if hit_upper else 0.0
                self.at_upper[leaving] = bool(hit_upper)
                self.at_upper[j] = False
                pivot_row = T[leave] / T[leave, j]
                T -= np.outer(T[:, j], pivot_row)
                T[leave] = pivot_row
                d -= d[j] * pivot_row
                self.basis[leave] = j

            self.pivots += 1
            if self.trace is not None:
                self._emit("pivot", entering=j, leaving=leaving,
                           theta=float(theta), bland=bland)
            if theta <= tol:
                degenerate_run += 1
                if not bland and degenerate_run > self.bland_after:
                    logger.debug(f"Switching to Bland's rule after {degenerate_run} degenerate pivots")
                    bland = True
            else:
                degenerate_run = 0
            if self.pivots % 50 == 0:
                self._recompute_basic_values()
            if self.pivots > self.max_pivots:
                raise IterationLimitError(f"simplex exceeded {self.max_pivots} pivots")
