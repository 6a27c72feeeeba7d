import csv
import io
import math

import pytest

from src.bench import (
    FIELDS,
    SolverSettings,
    algorithms_for,
    practical_coin,
    run_algorithm,
    run_bench,
    suite_instances,
    write_csv,
)
from src.generators import gen_gap_mst, gen_gap_sp
from src.instance_model import ProblemKind


def rows_by(rows, instance, algorithm):
    return [row for row in rows if row.instance == instance and row.algorithm == algorithm]


def test_algorithms_per_kind():
    assert algorithms_for(ProblemKind.SHORTEST_PATH) == ("exact", "sp-alg1", "sp-avg")
    assert algorithms_for(ProblemKind.SPANNING_TREE) == ("exact", "mst-det", "mst-rand", "mst-avg")


def test_run_algorithm_rejects_wrong_kind():
    with pytest.raises(ValueError):
        run_algorithm(gen_gap_sp(0), "mst-det")


def test_exact_report_carries_lower_bound():
    solution, report = run_algorithm(gen_gap_mst(2), "exact")
    assert solution.max_cost == 2
    assert report.lower_bound == 1
    assert report.ratio == pytest.approx(2.0)


def test_unknown_suite():
    with pytest.raises(ValueError):
        suite_instances("huge")


def test_gaps_suite_exact_ratios():
    rows = run_bench("gaps", seed=0)
    expected = {"gap_sp_r0": 2.0, "gap_sp_r1": 4.0, "gap_mst_k2": 2.0, "gap_mst_k3": 3.0}
    for name, ratio in expected.items():
        (exact,) = rows_by(rows, name, "exact")
        assert exact.lower_bound == 1
        assert exact.ratio == pytest.approx(ratio)
    assert [row.algorithm for row in rows if row.instance == "gap_mst_k2"] == list(
        algorithms_for(ProblemKind.SPANNING_TREE))


def test_random_suite_is_reproducible():
    first, second = io.StringIO(), io.StringIO()
    write_csv(run_bench("random", trials=2, seed=0), first)
    write_csv(run_bench("random", trials=2, seed=0), second)
    assert first.getvalue() == second.getvalue()

    reader = csv.DictReader(io.StringIO(first.getvalue()))
    assert tuple(reader.fieldnames) == FIELDS
    records = list(reader)
    assert len(records) == 2 * (3 + 4)
    assert all(record["millis"] == "0" for record in records)


def test_ratios_never_below_one():
    rows = run_bench("random", trials=2, seed=3, settings=SolverSettings(coin=practical_coin(3)))
    for row in rows:
        if row.max_cost is None:
            assert math.isnan(row.ratio)
            continue
        assert row.ratio >= 1.0 - 1e-9
        assert row.max_cost >= row.lower_bound


def test_parallel_bench_keeps_order():
    serial = run_bench("random", trials=1, seed=1)
    parallel = run_bench("random", trials=1, seed=1, workers=2)
    assert [row.as_csv(False) for row in serial] == [row.as_csv(False) for row in parallel]
