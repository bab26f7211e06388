# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

import json

import pandas as pd
import pytest

from hdlo_planning import hooks
from hdlo_planning.cli import build_parser, main
from hdlo_planning.planners.birrt import RrtOptions
from hdlo_planning.scene_io import bundled

PLANAR = bundled("planar_2r")
REACH = bundled("planar_2r_goal")
OUT_OF_REACH = bundled("planar_2r_unreachable")


def _read(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def test_every_command_has_a_handler():
    parser = build_parser()
    for command in hooks.commands:
        assert parser.parse_args([command]).command == command
    with pytest.raises(SystemExit):
        parser.parse_args(["dance"])


def test_statics_writes_the_equilibrium(tmp_path, capsys):
    out = tmp_path / "statics.json"
    assert main(["statics", "--scene", PLANAR, "--out", str(out)]) == 0
    doc = _read(out)
    assert doc["command"] == "statics"
    assert doc["state"]["q"] == pytest.approx([0.3, 0.6])
    assert doc["metrics"]["residual"] < 1e-8
    assert len(doc["end_effector_pose"]) == 4
    assert "planar_2r" in capsys.readouterr().out


def test_statics_at_given_actuation(tmp_path):
    out = tmp_path / "statics.json"
    assert main(["statics", "--scene", PLANAR, "--q-a", "0.1", "-0.2", "--out", str(out)]) == 0
    assert _read(out)["state"]["q"] == pytest.approx([0.1, -0.2])
    assert main(["statics", "--scene", PLANAR, "--q-a", "0.1"]) == hooks.exit_codes["input_error"]


def test_input_errors(tmp_path):
    assert main(["statics", "--scene", str(tmp_path / "absent.json")]) == 2
    assert main(["statics"]) == 2
    assert main(["iks", "--scene", PLANAR]) == 2
    assert main(["compare", str(tmp_path / "only.json")]) == 2


def test_iks_reaches_the_goal(tmp_path):
    out = tmp_path / "iks.json"
    assert main(["iks", "--scene", PLANAR, "--goal", REACH, "--out", str(out)]) == 0
    doc = _read(out)
    assert doc["metrics"]["goal_distance"] <= 1e-6
    assert len(doc["path"]) == 2


def test_unreachable_goal_exit_code(tmp_path):
    out = tmp_path / "iks.json"
    code = main(["iks", "--scene", PLANAR, "--goal", OUT_OF_REACH, "--method", "sqp", "--out", str(out)])
    assert code == hooks.exit_codes["goal_unreachable"]
    doc = _read(out)
    assert doc["status"] == "goal_unreachable"
    assert doc["metrics"]["goal_distance"] > 0.1


def test_plan_with_dense_schedule(tmp_path):
    out, dense = tmp_path / "plan.json", tmp_path / "schedule.csv"
    code = main(["plan", "--scene", PLANAR, "--goal", REACH, "--keyframes", "4",
                 "--out", str(out), "--dense", str(dense)])
    assert code == 0
    doc = _read(out)
    assert len(doc["path"]) == 5
    assert doc["phases"]["warm_start"] is not None
    frame = pd.read_csv(dense)
    assert list(frame.columns[:2]) == ["time", "segment"]
    assert frame.shape[1] == 4


def test_rrt_and_compare(tmp_path, capsys):
    rrt, iks, table = tmp_path / "rrt.json", tmp_path / "iks.json", tmp_path / "compare.json"
    assert main(["rrt", "--scene", PLANAR, "--goal", REACH, "--seed", "2", "--out", str(rrt)]) == 0
    doc = _read(rrt)
    assert doc["success"] and doc["seed"] == 2
    assert main(["iks", "--scene", PLANAR, "--goal", REACH, "--out", str(iks)]) == 0
    capsys.readouterr()
    assert main(["compare", str(rrt), str(iks), "--out", str(table)]) == 0
    assert "max_keyframe_distance" in capsys.readouterr().out
    metrics = {row["metric"]: row for row in _read(table)["metrics"]}
    assert metrics["keyframe_distance[0]"]["difference"] == pytest.approx(0.0)


def test_gradcheck_detects_a_corrupted_gradient(tmp_path):
    assert main(["gradcheck", "--scene", PLANAR, "--goal", REACH, "--target", "iks"]) == 0
    out = tmp_path / "gradcheck.json"
    code = main(["gradcheck", "--scene", PLANAR, "--goal", REACH, "--target", "iks", "--corrupt", "--out", str(out)])
    assert code == hooks.exit_codes["no_convergence"]
    assert _read(out)["passed"] is False


def test_gradcheck_targets(tmp_path):
    assert main(["gradcheck", "--scene", PLANAR, "--target", "statics"]) == 0
    assert main(["gradcheck", "--scene", PLANAR, "--goal", REACH, "--target", "trajopt", "--keyframes", "2"]) == 0


@pytest.mark.slow
def test_iks_on_the_seven_joint_arm(tmp_path):
    out = tmp_path / "iks.json"
    assert main(["iks", "--scene", bundled("arm7"), "--goal", bundled("arm7_goal"), "--out", str(out)]) == 0
    assert _read(out)["metrics"]["goal_distance"] <= 1e-6


def _canned_report(filters):
    return [{"fieldname": "metric"}, {"fieldname": "difference"}], [{"metric": "canned", "difference": 1.5}]


def test_compare_runs_the_registered_report(tmp_path, capsys, monkeypatch):
    monkeypatch.setitem(hooks.reports, "compare", "hdlo_planning.tests.test_cli._canned_report")
    out = tmp_path / "compare.json"
    assert main(["compare", "a.json", "b.json", "--out", str(out)]) == 0
    assert "canned" in capsys.readouterr().out
    assert _read(out)["metrics"] == [{"metric": "canned", "difference": 1.5}]


def test_rrt_that_never_connects_exits_as_unreachable(tmp_path, monkeypatch):
    monkeypatch.setattr("hdlo_planning.cli.RrtOptions",
                        lambda seed: RrtOptions(step=0.01, max_iter=1, max_connect_steps=1, seed=seed))
    out = tmp_path / "rrt.json"
    code = main(["rrt", "--scene", PLANAR, "--goal", REACH, "--out", str(out)])
    assert code == hooks.exit_codes["goal_unreachable"]
    doc = _read(out)
    assert doc["success"] is False
    assert doc["path"] == []
