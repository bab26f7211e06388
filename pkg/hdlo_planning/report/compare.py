# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

import numpy as np
import pandas as pd

from hdlo_planning.assembly import forward_kinematics, marker_positions
from hdlo_planning.exceptions import SceneFileError
from hdlo_planning.planners.trajectory import map_path_to_keyframes, marker_error, path_cost
from hdlo_planning.scene_io import load_result, load_scene
from hdlo_planning.statics import EquilibriumState


def _path(result):
    path = result.get("path") or []
    return [EquilibriumState(np.asarray(p["q"], dtype=float), np.asarray(p["u"], dtype=float),
                             np.asarray(p["lambda_bar"], dtype=float)) for p in path]


def _markers(asm, states):
    return np.array([marker_positions(asm, forward_kinematics(asm, s.q)) for s in states])


def compare_results(result_a, result_b):
    """Metric table of two result documents written for the same scene."""
    if result_a.get("scene_hash") != result_b.get("scene_hash"):
        raise SceneFileError("results were produced for different scenes")
    path_a, path_b = _path(result_a), _path(result_b)
    if not path_a or not path_b:
        raise SceneFileError("both results need a non-empty path")
    scene = load_scene(result_a["scene"], **result_a.get("scene_overrides", {}))
    if scene.scene_hash != result_a["scene_hash"]:
        raise SceneFileError(f"{result_a['scene']} changed since the results were written")
    asm = scene.assembly

    n = max(len(path_a), len(path_b)) - 1
    frames_a = map_path_to_keyframes(path_a, n) if n else path_a
    frames_b = map_path_to_keyframes(path_b, n) if n else path_b
    distances = [float(np.linalg.norm(a.q[asm.layout.actuated] - b.q[asm.layout.actuated]))
                 for a, b in zip(frames_a, frames_b)]

    rows = [
        {"metric": "path_cost", "a": path_cost(path_a), "b": path_cost(path_b)},
        {"metric": "path_cost_keyframes", "a": path_cost(frames_a), "b": path_cost(frames_b)},
        {"metric": "path_nodes", "a": len(path_a), "b": len(path_b)},
    ]
    for key in ("goal_distance", "wall_time", "iterations"):
        va, vb = result_a.get("metrics", {}).get(key), result_b.get("metrics", {}).get(key)
        if va is not None or vb is not None:
            rows.append({"metric": key, "a": va, "b": vb})
    table = pd.DataFrame(rows)
    table["difference"] = pd.to_numeric(table["b"], errors="coerce") - pd.to_numeric(table["a"], errors="coerce")
    extra = [{"metric": "marker_error", "a": np.nan, "b": np.nan,
              "difference": marker_error(_markers(asm, frames_a), _markers(asm, frames_b))
              if asm.markers else np.nan},
             {"metric": "max_keyframe_distance", "a": np.nan, "b": np.nan, "difference": max(distances)}]
    extra += [{"metric": f"keyframe_distance[{k}]", "a": np.nan, "b": np.nan, "difference": d}
              for k, d in enumerate(distances)]
    return pd.concat([table, pd.DataFrame(extra)], ignore_index=True)


def execute(filters=None):
    columns, data = [], []

    if filters and filters.get("result_a") and filters.get("result_b"):
        table = compare_results(load_result(filters["result_a"]), load_result(filters["result_b"]))
        columns = [{"label": name.replace("_", " ").title(), "fieldname": name,
                    "fieldtype": "Data" if name == "metric" else "Float", "width": 250}
                   for name in table.columns]
        data = table.to_dict(orient="records")

    return columns, data
