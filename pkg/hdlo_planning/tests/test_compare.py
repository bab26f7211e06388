# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

import numpy as np
import pytest

from hdlo_planning.exceptions import SceneFileError
from hdlo_planning.report.compare import compare_results, execute
from hdlo_planning.scene_io import result_document, write_result
from hdlo_planning.statics import EquilibriumState, solve_forward_statics


def _result(scene, q_as, command="plan", **metrics):
    asm = scene.assembly
    seed = EquilibriumState.zeros(asm)
    path = []
    for q_a in q_as:
        seed = solve_forward_statics(asm, np.asarray(q_a, dtype=float), seed)
        path.append({"q": seed.q, "u": seed.u, "lambda_bar": seed.lambda_bar})
    return result_document(command, scene, {}, {"path": path, "metrics": metrics})


def test_result_compared_with_itself(planar_scene):
    doc = _result(planar_scene, [[0.3, 0.6], [0.0, 0.8], [-0.3, 1.0]], goal_distance=1e-9)
    table = compare_results(doc, doc).set_index("metric")
    assert (table["difference"].abs() < 1e-12).all()
    assert table.loc["path_nodes", "a"] == 3
    assert table.loc["goal_distance", "b"] == pytest.approx(1e-9)
    assert "keyframe_distance[2]" in table.index


def test_paths_of_different_length_are_aligned(planar_scene):
    short = _result(planar_scene, [[0.3, 0.6], [-0.3, 1.0]])
    long = _result(planar_scene, [[0.3, 0.6], [0.1, 0.7], [0.0, 0.8], [-0.3, 1.0]], command="rrt")
    table = compare_results(short, long).set_index("metric")
    assert table.loc["path_nodes", "difference"] == 2
    # shared endpoints
    assert table.loc["keyframe_distance[0]", "difference"] == pytest.approx(0.0)
    assert table.loc["keyframe_distance[3]", "difference"] == pytest.approx(0.0)


def test_results_for_different_scenes_are_rejected(planar_scene):
    a = _result(planar_scene, [[0.3, 0.6]])
    b = dict(a, scene_hash="0" * 64)
    with pytest.raises(SceneFileError, match="different scenes"):
        compare_results(a, b)
    with pytest.raises(SceneFileError, match="non-empty path"):
        compare_results(a, dict(a, path=[]))


def test_report_execute(tmp_path, planar_scene):
    assert execute() == ([], [])
    path = tmp_path / "plan.json"
    write_result(str(path), _result(planar_scene, [[0.3, 0.6], [0.0, 0.8]]))
    columns, data = execute({"result_a": str(path), "result_b": str(path)})
    assert [c["fieldname"] for c in columns] == ["metric", "a", "b", "difference"]
    assert columns[0]["fieldtype"] == "Data"
    assert data[0]["metric"] == "path_cost"
