import json
import tempfile
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from src.instance_model import (
    FractionalSolution,
    InfeasibleSolutionError,
    Instance,
    InstanceError,
    ProblemKind,
    RunReport,
    cost_ratio,
    evaluate,
    load_instance,
    parse_instance,
    report_to_dict,
    save_instance,
    serialize_instance,
    solution_to_dict,
)

F = Fraction


def diamond():
    """s=0 -> {1, 2} -> t=3 with two scenarios favouring opposite sides."""
    return Instance(
        ProblemKind.SHORTEST_PATH, 4,
        ((0, 1), (1, 3), (0, 2), (2, 3)),
        ((F(1), F(1), F(0), F(0)), (F(0), F(0), F(1), F(2))),
        0, 3, "diamond",
    )


def triangle():
    return Instance(
        ProblemKind.SPANNING_TREE, 3,
        ((0, 1), (1, 2), (0, 2)),
        ((F(1), F(0), F(0)), (F(0), F(1), F(0)), (F(0), F(0), F(1))),
        name="triangle",
    )


def test_evaluate_path_costs_exactly():
    solution = evaluate(diamond(), [2, 3])
    assert solution.edges == (2, 3)
    assert solution.per_scenario_cost == (F(0), F(3))
    assert solution.max_cost == 3


def test_evaluate_tree():
    solution = evaluate(triangle(), [0, 1])
    assert solution.per_scenario_cost == (1, 1, 0)
    assert solution.max_cost == 1


def test_evaluate_rejects_disconnected_path():
    with pytest.raises(InfeasibleSolutionError):
        evaluate(diamond(), [0, 3])


def test_evaluate_rejects_tree_with_cycle():
    with pytest.raises(InfeasibleSolutionError) as info:
        evaluate(triangle(), [0, 1, 2])
    assert info.value.witness


def test_evaluate_rejects_unknown_edge():
    with pytest.raises(InfeasibleSolutionError):
        evaluate(triangle(), [0, 7])


def test_negative_cost_names_position():
    with pytest.raises(InstanceError) as info:
        Instance(ProblemKind.SPANNING_TREE, 2, ((0, 1),), ((F(-1),),))
    assert info.value.path == "scenarios[0][0]"


def test_validation_errors():
    with pytest.raises(InstanceError):
        Instance(ProblemKind.SPANNING_TREE, 2, ((0, 1),), ())
    with pytest.raises(InstanceError):
        Instance(ProblemKind.SPANNING_TREE, 2, ((0, 2),), ((F(1),),))
    with pytest.raises(InstanceError):
        Instance(ProblemKind.SPANNING_TREE, 3, ((0, 1),), ((F(1),),))
    with pytest.raises(InstanceError):
        Instance(ProblemKind.SHORTEST_PATH, 2, ((0, 1),), ((F(1),),), 0, 0)
    with pytest.raises(InstanceError):
        Instance(ProblemKind.SHORTEST_PATH, 2, ((0, 1),), ((F(1),),))


def test_parse_accepts_int_float_and_fraction_strings():
    text = json.dumps({
        "kind": "mst", "n": 2, "edges": [[0, 1]],
        "scenarios": [[3], [0.5], ["2/3"]],
    })
    instance = parse_instance(text)
    assert instance.scenarios == ((F(3),), (F(1, 2),), (F(2, 3),))


def test_parse_reports_field_path():
    with pytest.raises(InstanceError) as info:
        parse_instance('{"kind": "mst", "n": 2, "edges": [[0, 1]], "scenarios": [[true]]}')
    assert info.value.path == "scenarios[0][0]"
    with pytest.raises(InstanceError):
        parse_instance('{"kind": "tsp", "n": 2, "edges": [], "scenarios": [[]]}')
    with pytest.raises(InstanceError):
        parse_instance("not json")


def test_serialize_is_canonical():
    data = serialize_instance(diamond())
    assert data.endswith(b"\n")
    assert parse_instance(data) == diamond()
    assert serialize_instance(parse_instance(data)) == data


def test_save_and_load_instance():
    with tempfile.TemporaryDirectory() as tmpdir:
        path = save_instance(triangle(), Path(tmpdir) / "nested" / "triangle.json")
        assert load_instance(path) == triangle()


def test_graph_is_keyed_by_edge_id():
    g = diamond().graph()
    assert sorted(key for _, _, key in g.edges(keys=True)) == [0, 1, 2, 3]
    assert g.is_directed()


def test_cost_matrix_and_max_costs():
    instance = diamond()
    assert instance.cost_matrix.shape == (2, 4)
    assert instance.max_costs == (1, 1, 1, 2)


def test_fractional_support():
    solution = FractionalSolution(np.array([0.0, 0.5, 1e-12, 1.0]), F(1))
    assert solution.support == (1, 3)


def test_report_serialization():
    solution = evaluate(triangle(), [0, 1])
    report = RunReport("exact", lower_bound=F(1, 2), max_cost=solution.max_cost)
    data = report_to_dict(report)
    assert data["lower_bound"] == "1/2"
    assert data["ratio"] == pytest.approx(2.0)
    assert solution_to_dict(solution)["max_cost"] == 1
    json.dumps(data)


def test_cost_ratio_with_zero_bound():
    assert cost_ratio(F(0), F(0)) == 1.0
    assert cost_ratio(F(1), F(0)) == float("inf")
