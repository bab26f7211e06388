# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""Keyframe utilities shared by the planners: interpolation, path cost, resampling, marker error."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from hdlo_planning.exceptions import DimensionMismatch


def warm_start(x0, xf, N):
    """Rows k = 0..N of x0 (1 - k/N) + xf k/N."""
    x0 = np.asarray(x0, dtype=float)
    xf = np.asarray(xf, dtype=float)
    if x0.shape != xf.shape:
        raise DimensionMismatch(f"warm start endpoints differ in shape: {x0.shape} vs {xf.shape}")
    if N < 1:
        raise DimensionMismatch(f"need at least one keyframe, got N={N}")
    s = np.arange(N + 1)[:, None] / N
    out = x0[None, :] * (1.0 - s) + xf[None, :] * s
    out[0], out[N] = x0, xf
    return out


def _psd(name, Q, n):
    if Q is None:
        return np.eye(n)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape != (n, n):
        raise DimensionMismatch(f"{name} must be {n}x{n}, got {Q.shape}")
    if not np.allclose(Q, Q.T):
        raise ValueError(f"{name} must be symmetric")
    if n and np.min(np.linalg.eigvalsh(Q)) < -1e-12:
        raise ValueError(f"{name} must be positive semidefinite")
    return Q


@dataclass(frozen=True)
class PathWeights:
    """Q_q, Q_u, Q_lambda; None means identity."""
    Q_q: Optional[np.ndarray] = None
    Q_u: Optional[np.ndarray] = None
    Q_lambda: Optional[np.ndarray] = None

    def matrix(self, n_d, n_a, n_c):
        W = np.zeros((n_d + n_a + n_c,) * 2)
        W[:n_d, :n_d] = _psd("Q_q", self.Q_q, n_d)
        W[n_d:n_d + n_a, n_d:n_d + n_a] = _psd("Q_u", self.Q_u, n_a)
        W[n_d + n_a:, n_d + n_a:] = _psd("Q_lambda", self.Q_lambda, n_c)
        return W


def _state_rows(states, dims):
    if hasattr(states, "states"):
        states = states.states
    states = list(states)
    if states and hasattr(states[0], "as_vector"):
        first = states[0]
        dims = dims or (first.q.size, first.u.size, first.lambda_bar.size)
        return np.array([s.as_vector() for s in states]), dims
    return np.array(states, dtype=float), dims


def _weights(weights, rows, dims):
    if dims is None:
        return np.eye(rows.shape[1]) if weights is None else weights.matrix(rows.shape[1], 0, 0)
    return (weights or PathWeights()).matrix(*dims)


def path_cost(states, weights=None, dims=None):
    """
    Sum over consecutive keyframes of the weighted squared differences.

    ``states`` are EquilibriumStates, a Trajectory, or rows of [q, u, lambda];
    ``dims`` = (n_d, n_a, n_c) splits the rows when the weights are per block.
    """
    V, dims = _state_rows(states, dims)
    if len(V) < 2:
        return 0.0
    W = _weights(weights, V, dims)
    D = np.diff(V, axis=0)
    return float(np.einsum("ki,ij,kj->", D, W, D))


def path_cost_gradient(states, weights=None, dims=None):
    """Gradient per keyframe: 2W(2x_k - x_{k-1} - x_{k+1}) inside, 2W(x_N - x_{N-1}) at the end."""
    V, dims = _state_rows(states, dims)
    G = np.zeros_like(V)
    if len(V) < 2:
        return G
    W = _weights(weights, V, dims)
    DW = 2.0 * np.diff(V, axis=0) @ W
    G[1:] += DW
    G[:-1] -= DW
    return G


def resample_dense(q_a_keyframes, period=10.0, rate=100.0, dwell=5.0, names=None):
    """
    Piecewise-linear actuator commands through the keyframes, each motion
    lasting ``period`` seconds and followed by a ``dwell`` hold.
    """
    Q = np.atleast_2d(np.asarray(q_a_keyframes, dtype=float))
    segments = len(Q) - 1
    names = list(names) if names is not None else [f"q_a{i}" for i in range(Q.shape[1])]
    if len(names) != Q.shape[1]:
        raise DimensionMismatch(f"{len(names)} column names for {Q.shape[1]} actuated coordinates")
    if segments < 1:
        return pd.DataFrame(Q, columns=names).assign(time=0.0)[["time"] + names]
    slot = period + dwell
    count = int(round(segments * slot * rate)) + 1
    t = np.arange(count) / rate
    k = np.minimum((t // slot).astype(int), segments - 1)
    s = np.minimum((t - k * slot) / period, 1.0)[:, None]
    values = (1.0 - s) * Q[k] + s * Q[k + 1]
    frame = pd.DataFrame(values, columns=names)
    frame.insert(0, "time", t)
    frame.insert(1, "segment", k)
    return frame


def schedule_duration(n_keyframes, period=10.0, dwell=5.0):
    return n_keyframes * (period + dwell)


def marker_error(markers_sim, markers_ref):
    """Mean over frames of the mean marker distance."""
    A = np.asarray(markers_sim, dtype=float)
    B = np.asarray(markers_ref, dtype=float)
    if A.shape != B.shape or A.ndim != 3 or A.shape[-1] != 3:
        raise DimensionMismatch(f"marker sets must share a (frames, markers, 3) shape, got {A.shape} and {B.shape}")
    if A.shape[0] == 0 or A.shape[1] == 0:
        return 0.0
    return float(np.mean(np.mean(np.linalg.norm(A - B, axis=2), axis=1)))


def map_path_to_keyframes(path, N):
    """Pick N + 1 evenly spaced nodes (endpoints included) from a sampled path."""
    if not path:
        raise DimensionMismatch("cannot map an empty path")
    idx = np.round(np.linspace(0, len(path) - 1, N + 1)).astype(int)
    return [path[i] for i in idx]
