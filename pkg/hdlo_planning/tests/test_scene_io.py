# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

import glob
import json
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hdlo_planning.exceptions import HdloError, SceneFileError
from hdlo_planning.scene_io import (
    SCENES_DIR,
    bundled,
    load_goal,
    load_result,
    load_scene,
    parse_scene,
    result_document,
    scene_hash,
    to_jsonable,
    write_result,
)


def _doc(name):
    with open(bundled(name), encoding="utf-8") as fh:
        return json.load(fh)


@pytest.mark.parametrize("name", ["planar_2r", "cantilever", "desk_two_rod", "morph_b", "morph_c", "morph_d", "arm7"])
def test_bundled_scenes_parse(name):
    scene = load_scene(bundled(name), num_points=5)
    assert scene.assembly.layout.n_d > 0
    assert len(scene.scene_hash) == 64
    assert os.path.isabs(scene.source)


def test_every_goal_file_loads():
    for path in glob.glob(os.path.join(SCENES_DIR, "*_goal.json")):
        goal = load_goal(path)
        assert goal.kind in ("position", "orientation", "full_pose")


def test_goal_kinds_follow_the_closures():
    # a spherical joint transmits no moment, so those scenes can only be steered by position
    for name in ("morph_b", "morph_c", "morph_d", "arm7", "desk_two_rod"):
        scene = load_scene(bundled(name), num_points=3)
        goal = load_goal(bundled(f"{name}_goal"))
        if any(c.kind == "spherical" for c in scene.assembly.closures):
            assert goal.kind == "position", name


def test_seven_joint_arm_layout():
    asm = load_scene(bundled("arm7"), num_points=4).assembly
    assert asm.layout.n_a == 7
    assert asm.layout.n_c == 0
    assert asm.layout.n_d == 7 + 3 * 3
    assert all(link.joint.kind == "revolute" for link in asm.links[:7])


def test_pose_goal_is_assembled_from_rotation_and_translation():
    goal = load_goal(bundled("desk_two_rod_goal"))
    assert goal.kind == "full_pose"
    assert goal.target.shape == (4, 4)
    assert_allclose(goal.target[:3, 3], [0.08, 0.0, 0.35])
    assert_allclose(goal.target[3], [0.0, 0.0, 0.0, 1.0])


def test_unknown_keys_are_named():
    doc = _doc("planar_2r")
    doc["colour"] = "red"
    with pytest.raises(SceneFileError, match="colour"):
        parse_scene(doc)
    doc = _doc("planar_2r")
    doc["links"][1]["joint"]["stiffness"] = 3.0
    with pytest.raises(SceneFileError, match=r"links\[1\]"):
        parse_scene(doc)


def test_schema_version_is_checked():
    doc = _doc("planar_2r")
    doc["schema_version"] = 2
    with pytest.raises(SceneFileError, match="schema_version"):
        parse_scene(doc)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(SceneFileError):
        load_scene(str(tmp_path / "absent.json"))
    broken = tmp_path / "broken.json"
    broken.write_text('{"schema_version": 1,', encoding="utf-8")
    with pytest.raises(SceneFileError, match="broken.json"):
        load_scene(str(broken))


def test_bad_start_shape():
    doc = _doc("planar_2r")
    doc["start"] = {"q_a": [0.1, 0.2, 0.3]}
    with pytest.raises(HdloError, match="start.q_a"):
        parse_scene(doc)


def test_hash_is_stable_and_tracks_overrides():
    doc = _doc("planar_2r")
    assert scene_hash(doc) == scene_hash(json.loads(json.dumps(doc)))
    plain = load_scene(bundled("planar_2r"))
    assert plain.scene_hash == scene_hash(doc)
    assert load_scene(bundled("planar_2r"), num_points=9).scene_hash != plain.scene_hash


def test_scene_defaults_override_settings():
    doc = _doc("planar_2r")
    doc["defaults"] = {"goal_tol": 1e-4, "num_points": 9}
    settings = parse_scene(doc).settings()
    assert settings.goal_tol == 1e-4
    assert settings.num_points == 9
    assert settings.statics_max_iter == 100


def test_non_finite_numbers_become_null():
    assert to_jsonable({"a": np.float64("nan"), "b": np.arange(2), "c": (np.bool_(True), np.int64(3))}) \
        == {"a": None, "b": [0, 1], "c": [True, 3]}


def test_result_files_round_trip(tmp_path, planar_scene):
    doc = result_document("statics", planar_scene, {"method": "newton"},
                          {"metrics": {"residual": np.float64(1e-12), "cost": float("inf")}}, seed=4)
    path = tmp_path / "out" / "statics.json"
    write_result(str(path), doc)
    loaded = load_result(str(path))
    assert loaded["command"] == "statics"
    assert loaded["scene_hash"] == planar_scene.scene_hash
    assert loaded["seed"] == 4
    assert loaded["metrics"] == {"residual": 1e-12, "cost": None}


def test_scene_files_are_not_results():
    with pytest.raises(SceneFileError, match="not a result"):
        load_result(bundled("planar_2r"))
