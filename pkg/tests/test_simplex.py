import io
import json

import numpy as np
import pytest

from src.instance_model import IterationLimitError
from src.simplex import EQ, GE, LE, BoundedSimplex, LpStatus, LpTrace


def test_simple_maximisation():
    # max x + y  s.t. x + 2y <= 4, 3x + y <= 6, 0 <= x, y <= 10
    result = BoundedSimplex(
        np.array([[1.0, 2.0], [3.0, 1.0]]), [LE, LE], np.array([4.0, 6.0]),
        np.zeros(2), np.full(2, 10.0), cost=np.array([-1.0, -1.0]),
    ).solve()
    assert result.status == LpStatus.OPTIMAL
    assert result.x == pytest.approx([1.6, 1.2])
    assert result.objective == pytest.approx(-2.8)


def test_upper_bounds_are_respected_without_rows():
    result = BoundedSimplex(
        np.array([[1.0, 1.0]]), [LE], np.array([10.0]),
        np.zeros(2), np.array([1.0, 2.0]), cost=np.array([-1.0, -1.0]),
    ).solve()
    assert result.status == LpStatus.OPTIMAL
    assert result.x == pytest.approx([1.0, 2.0])


def test_equality_and_lower_bounds():
    # min x + y  s.t. x + y == 3, x >= 1, y in [0.5, 5]
    result = BoundedSimplex(
        np.array([[1.0, 1.0]]), [EQ], np.array([3.0]),
        np.array([1.0, 0.5]), np.array([5.0, 5.0]), cost=np.array([1.0, 2.0]),
    ).solve()
    assert result.status == LpStatus.OPTIMAL
    assert result.x == pytest.approx([2.5, 0.5])


def test_infeasible():
    result = BoundedSimplex(
        np.array([[1.0, 1.0], [1.0, 1.0]]), [LE, GE], np.array([1.0, 2.0]),
        np.zeros(2), np.full(2, 5.0),
    ).solve()
    assert result.status == LpStatus.INFEASIBLE
    assert result.x is None


def test_inconsistent_bounds_are_infeasible():
    result = BoundedSimplex(np.zeros((1, 1)), [LE], np.array([1.0]), np.array([2.0]), np.array([1.0])).solve()
    assert result.status == LpStatus.INFEASIBLE


def test_unbounded():
    result = BoundedSimplex(
        np.array([[1.0, -1.0]]), [LE], np.array([1.0]),
        np.zeros(2), np.full(2, np.inf), cost=np.array([0.0, -1.0]),
    ).solve()
    assert result.status == LpStatus.UNBOUNDED


def test_degenerate_problem_terminates():
    # many redundant rows through the optimum vertex
    A = np.array([[1.0, 1.0]] * 6 + [[1.0, 0.0], [0.0, 1.0]])
    b = np.array([1.0] * 6 + [1.0, 1.0])
    result = BoundedSimplex(A, [LE] * 8, b, np.zeros(2), np.full(2, 1.0), cost=np.array([-1.0, -1.0]),
                            bland_after=1).solve()
    assert result.status == LpStatus.OPTIMAL
    assert result.objective == pytest.approx(-1.0)


def test_pivot_cap_raises():
    with pytest.raises(IterationLimitError):
        BoundedSimplex(
            np.array([[1.0, 2.0], [3.0, 1.0]]), [LE, LE], np.array([4.0, 6.0]),
            np.zeros(2), np.full(2, 10.0), cost=np.array([-1.0, -1.0]), max_pivots=0,
        ).solve()


def test_trace_writes_json_lines():
    stream = io.StringIO()
    BoundedSimplex(
        np.array([[1.0, 1.0]]), [GE], np.array([1.0]),
        np.zeros(2), np.full(2, 1.0), cost=np.array([1.0, 2.0]), trace=LpTrace(stream),
    ).solve()
    events = [json.loads(line) for line in stream.getvalue().splitlines()]
    assert events[-1]["event"] == "solve"
    assert events[-1]["status"] == "optimal"
    assert any(event["event"] == "pivot" for event in events)
