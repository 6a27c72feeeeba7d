"""
Rounding for the two selection problems behind both network algorithms:
Min-Max RS (exactly one element per group) and Min-Max SI (exactly p
elements).

The deterministic variants use conditional expectations on the pessimistic
estimator

    Phi = sum_xi prod_i m_i(xi),   m_i(xi) = E[exp(t * c^xi(choice_i) / L)]

with t = ln(1 + lnK / lnlnK). All estimator arithmetic is done in log space.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from src.instance_model import InvariantViolation, RoundingError

logger = logging.getLogger(__name__)

SUM_TOLERANCE = 1e-7
ESTIMATOR_SLACK = 1e-6


class SelectionMode(str, Enum):
    SI = "si"
    RS = "rs"


@dataclass(frozen=True, eq=False)
class GroupedFractional:
    """
    Fractional selection x over element ids 0..len(x)-1. RS: disjoint
    groups each carrying mass 1. SI: a single group carrying mass p.
    """
    groups: Tuple[Tuple[int, ...], ...]
    x: np.ndarray
    mode: SelectionMode
    L: float
    p: Optional[int] = None

    @classmethod
    def rs(cls, groups: Sequence[Sequence[int]], x: Sequence[float], L: float) -> "GroupedFractional":
        return cls(tuple(tuple(int(e) for e in g) for g in groups), np.asarray(x, dtype=float), SelectionMode.RS, float(L))

    @classmethod
    def si(cls, elements: Sequence[int], x: Sequence[float], p: int, L: float) -> "GroupedFractional":
        return cls((tuple(int(e) for e in elements),), np.asarray(x, dtype=float), SelectionMode.SI, float(L), p)

    def validate(self):
        seen = set()
        for i, group in enumerate(self.groups):
            if not group:
                raise RoundingError(f"group {i} is empty")
            overlap = seen.intersection(group)
            if overlap:
                raise RoundingError(f"group {i} shares elements {sorted(overlap)} with an earlier group")
            seen.update(group)
        if np.any(self.x < -SUM_TOLERANCE) or np.any(self.x > 1 + SUM_TOLERANCE):
            raise RoundingError("fractional values must lie in [0, 1]")
        if self.L < 0:
            raise RoundingError("L must be nonnegative")
        if self.mode == SelectionMode.RS:
            for i, group in enumerate(self.groups):
                mass = float(self.x[list(group)].sum())
                if abs(mass - 1.0) > SUM_TOLERANCE:
                    raise RoundingError(f"group {i} has mass {mass:.9f}, expected 1")
        else:
            size = len(self.groups[0])
            if self.p is None or not 1 <= self.p <= size:
                raise RoundingError(f"p={self.p} is invalid for {size} elements")
            mass = float(self.x[list(self.groups[0])].sum())
            if abs(mass - self.p) > SUM_TOLERANCE * max(1, self.p):
                raise RoundingError(f"fractional mass {mass:.9f} differs from p={self.p}")


@dataclass
class SelectionOutcome:
    chosen: Tuple[int, ...]
    per_scenario_cost: np.ndarray
    max_cost: float
    potential_trace: List[float] = field(default_factory=list)


def estimator_t(K: int) -> float:
    K = max(K, 3)
    return math.log(1.0 + math.log(K) / math.log(math.log(K)))


def quality_factor(K: int) -> float:
    """1 + lnK/lnlnK with K clamped to at least 3."""
    K = max(K, 3)
    return 1.0 + math.log(K) / math.log(math.log(K))


def _outcome(costs: np.ndarray, chosen: Sequence[int], trace: List[float]) -> SelectionOutcome:
    chosen = tuple(sorted(int(e) for e in chosen))
    per_scenario = costs[:, list(chosen)].sum(axis=1) if chosen else np.zeros(costs.shape[0])
    return SelectionOutcome(chosen, per_scenario, float(per_scenario.max()), trace)


def _check_step(previous: float, current: float, step: str):
    if current > previous + ESTIMATOR_SLACK * max(1.0, abs(previous)):
        raise InvariantViolation(f"estimator increased at {step}: {previous:.12f} -> {current:.12f}")


def _min_max_fallback(gf: GroupedFractional, costs: np.ndarray) -> SelectionOutcome:
    # L = 0: the estimator is undefined, take the cheapest worst case per group
    chosen = []
    for group in gf.groups:
        worst = costs[:, list(group)].max(axis=0)
        chosen.append(group[int(np.argmin(worst))])
    return _outcome(costs, chosen, [])


def round_rs_deterministic(gf: GroupedFractional, costs: np.ndarray) -> SelectionOutcome:
    """One element per group, chosen group by group to minimise the estimator."""
    if gf.mode != SelectionMode.RS:
        raise RoundingError("round_rs_deterministic needs an RS input")
    gf.validate()
    costs = np.asarray(costs, dtype=float)
    if gf.L <= 0:
        return _min_max_fallback(gf, costs)

    scaled = estimator_t(costs.shape[0]) * costs / gf.L
    group_terms = [
        logsumexp(scaled[:, list(group)], b=gf.x[list(group)], axis=1) for group in gf.groups
    ]
    decided = np.zeros(costs.shape[0])
    rest = np.sum(group_terms, axis=0)
    trace = [float(logsumexp(rest))]
    chosen = []
    for i, group in enumerate(gf.groups):
        rest = rest - group_terms[i]
        candidates = [e for e in group if gf.x[e] > 0]
        values = [float(logsumexp(decided + scaled[:, e] + rest)) for e in candidates]
        best = int(np.argmin(values))
        pick = candidates[best]
        decided += scaled[:, pick]
        chosen.append(pick)
        _check_step(trace[-1], values[best], f"group {i}")
        trace.append(values[best])
    return _outcome(costs, chosen, trace)


def _inclusion_terms(scaled: np.ndarray, x: np.ndarray) -> np.ndarray:
    # log((1 - x) + x * exp(s)) per scenario, for fractional x only
    return np.logaddexp(np.log1p(-x)[None, :], np.log(x)[None, :] + scaled)


def _repair_cardinality(gf: GroupedFractional, scaled: np.ndarray, chosen: set) -> set:
    elements = gf.groups[0]
    decided = scaled[:, sorted(chosen)].sum(axis=1) if chosen else np.zeros(scaled.shape[0])
    while len(chosen) > gf.p:
        options = sorted(chosen)
        values = [float(logsumexp(decided - scaled[:, e])) for e in options]
        drop = options[int(np.argmin(values))]
        chosen.remove(drop)
        decided -= scaled[:, drop]
    if len(chosen) < gf.p:
        pool = [e for e in elements if e not in chosen and gf.x[e] > 0]
        if len(pool) < gf.p - len(chosen):
            pool = [e for e in elements if e not in chosen]
        while len(chosen) < gf.p:
            values = [float(logsumexp(decided + scaled[:, e])) for e in pool]
            add = pool.pop(int(np.argmin(values)))
            chosen.add(add)
            decided += scaled[:, add]
    return chosen


def round_si_deterministic(gf: GroupedFractional, costs: np.ndarray) -> SelectionOutcome:
    """
    Decide each element in or out by conditional expectations over
    independent x_e-inclusion, then repair the cardinality to exactly p.
    """
    if gf.mode != SelectionMode.SI:
        raise RoundingError("round_si_deterministic needs an SI input")
    gf.validate()
    costs = np.asarray(costs, dtype=float)
    elements = gf.groups[0]
    x = np.clip(gf.x, 0.0, 1.0)
    forced_in = {e for e in elements if x[e] >= 1.0 - SUM_TOLERANCE}
    fractional = [e for e in elements if SUM_TOLERANCE < x[e] < 1.0 - SUM_TOLERANCE]

    if gf.L <= 0:
        worst = costs[:, list(elements)].max(axis=0)
        order = sorted(range(len(elements)), key=lambda i: (worst[i], -x[elements[i]], elements[i]))
        return _outcome(costs, [elements[i] for i in order[: gf.p]], [])

    scaled = estimator_t(costs.shape[0]) * costs / gf.L
    decided = scaled[:, sorted(forced_in)].sum(axis=1) if forced_in else np.zeros(costs.shape[0])
    terms = _inclusion_terms(scaled[:, fractional], x[fractional]) if fractional else np.zeros((costs.shape[0], 0))
    rest = terms.sum(axis=1)
    trace = [float(logsumexp(decided + rest))]
    chosen = set(forced_in)
    for pos, e in enumerate(fractional):
        rest = rest - terms[:, pos]
        phi_in = float(logsumexp(decided + scaled[:, e] + rest))
        phi_out = float(logsumexp(decided + rest))
        include = phi_in < phi_out or (phi_in == phi_out and x[e] >= 0.5)
        if include:
            chosen.add(e)
            decided += scaled[:, e]
        value = phi_in if include else phi_out
        _check_step(trace[-1], value, f"element {e}")
        trace.append(value)

    if len(chosen) != gf.p:
        logger.debug(f"SI rounding picked {len(chosen)} elements, repairing to p={gf.p}")
        chosen = _repair_cardinality(gf, scaled, chosen)
    return _outcome(costs, chosen, trace)


def round_rs_randomized(gf: GroupedFractional, costs: np.ndarray, rng_seed: int) -> SelectionOutcome:
    """Independent draw per group with probabilities x."""
    if gf.mode != SelectionMode.RS:
        raise RoundingError("round_rs_randomized needs an RS input")
    gf.validate()
    rng = np.random.default_rng(rng_seed)
    chosen = []
    for group in gf.groups:
        weights = np.clip(gf.x[list(group)], 0.0, None)
        chosen.append(group[int(rng.choice(len(group), p=weights / weights.sum()))])
    return _outcome(np.asarray(costs, dtype=float), chosen, [])


def round_si_randomized(gf: GroupedFractional, costs: np.ndarray, rng_seed: int) -> SelectionOutcome:
    """Independent x_e-inclusion followed by the same cardinality repair."""
    if gf.mode != SelectionMode.SI:
        raise RoundingError("round_si_randomized needs an SI input")
    gf.validate()
    costs = np.asarray(costs, dtype=float)
    rng = np.random.default_rng(rng_seed)
    elements = gf.groups[0]
    draws = rng.random(len(elements))
    chosen = {e for e, u in zip(elements, draws) if u < gf.x[e]}
    if len(chosen) != gf.p:
        L = gf.L if gf.L > 0 else 1.0
        chosen = _repair_cardinality(gf, estimator_t(costs.shape[0]) * costs / L, chosen)
    return _outcome(costs, chosen, [])
