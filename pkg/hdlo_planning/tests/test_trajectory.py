# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hdlo_planning.exceptions import DimensionMismatch
from hdlo_planning.nlp import central_difference_jacobian
from hdlo_planning.planners.trajectory import (
    PathWeights,
    map_path_to_keyframes,
    marker_error,
    path_cost,
    path_cost_gradient,
    resample_dense,
    schedule_duration,
    warm_start,
)
from hdlo_planning.statics import EquilibriumState


def test_warm_start_interpolates_with_exact_endpoints():
    x0, xf = np.array([0.0, 1.0, -2.0]), np.array([1.0, 3.0, 2.0])
    rows = warm_start(x0, xf, 4)
    assert rows.shape == (5, 3)
    assert np.array_equal(rows[0], x0) and np.array_equal(rows[-1], xf)
    assert_allclose(rows[2], 0.5 * (x0 + xf))
    assert_allclose(np.diff(rows, axis=0), np.tile((xf - x0) / 4, (4, 1)))
    with pytest.raises(DimensionMismatch):
        warm_start(x0, xf[:2], 4)
    with pytest.raises(DimensionMismatch):
        warm_start(x0, xf, 0)


def test_path_cost_of_equal_steps():
    rows = warm_start(np.zeros(2), np.array([3.0, 4.0]), 5)
    # five steps of length one
    assert path_cost(rows) == pytest.approx(5.0)
    assert path_cost(rows[:1]) == 0.0


def test_path_cost_weights_each_block():
    states = [EquilibriumState(np.array([0.0, 0.0]), np.array([0.0]), np.zeros(0)),
              EquilibriumState(np.array([1.0, 2.0]), np.array([3.0]), np.zeros(0))]
    assert path_cost(states) == pytest.approx(1.0 + 4.0 + 9.0)
    weights = PathWeights(Q_q=np.diag([2.0, 0.0]), Q_u=np.zeros((1, 1)))
    assert path_cost(states, weights) == pytest.approx(2.0)


def test_path_cost_gradient_against_central_differences(rng):
    V = rng.normal(size=(4, 3))
    weights = PathWeights(Q_q=np.array([[2.0, 0.5], [0.5, 1.0]]), Q_u=np.array([[3.0]]))
    dims = (2, 1, 0)
    G = path_cost_gradient(V, weights, dims)
    fd = central_difference_jacobian(lambda v: path_cost(v.reshape(4, 3), weights, dims), V.ravel())
    assert_allclose(G.ravel(), fd.ravel(), atol=1e-7)


def test_weights_must_be_positive_semidefinite():
    with pytest.raises(ValueError):
        PathWeights(Q_q=np.diag([1.0, -1.0])).matrix(2, 0, 0)
    with pytest.raises(ValueError):
        PathWeights(Q_q=np.array([[1.0, 2.0], [0.0, 1.0]])).matrix(2, 0, 0)
    with pytest.raises(DimensionMismatch):
        PathWeights(Q_u=np.eye(3)).matrix(2, 2, 0)


def test_dense_schedule_of_eleven_keyframes():
    keyframes = np.linspace(0.0, 1.0, 11)[:, None] * np.array([1.0, -2.0])
    frame = resample_dense(keyframes, names=["a", "b"])
    assert list(frame.columns) == ["time", "segment", "a", "b"]
    assert frame["time"].iloc[-1] == pytest.approx(150.0)
    assert schedule_duration(10) == pytest.approx(150.0)
    assert len(frame) == 15001
    assert_allclose(frame[["a", "b"]].iloc[-1], keyframes[-1])
    # dwell: hold the first target between t = 10 s and t = 15 s
    hold = frame[(frame["time"] >= 10.0) & (frame["time"] <= 15.0)]
    assert_allclose(hold["a"], 0.1)
    mid = frame.loc[frame["time"].sub(5.0).abs().idxmin()]
    assert mid["a"] == pytest.approx(0.05)


def test_marker_error_averages_distances():
    sim = np.zeros((2, 2, 3))
    ref = np.zeros((2, 2, 3))
    ref[0, 0] = [3.0, 4.0, 0.0]
    ref[1, :] = [0.0, 0.0, 1.0]
    assert marker_error(sim, ref) == pytest.approx((2.5 + 1.0) / 2.0)
    with pytest.raises(DimensionMismatch):
        marker_error(sim, ref[:, :1])


def test_path_mapping_keeps_endpoints():
    path = list(range(23))
    picked = map_path_to_keyframes(path, 10)
    assert len(picked) == 11
    assert picked[0] == 0 and picked[-1] == 22
    assert picked == sorted(picked)
    with pytest.raises(DimensionMismatch):
        map_path_to_keyframes([], 3)
