# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""
SE(3) / se(3) utilities.

Conventions used throughout the package:

- a twist is a length-6 numpy array ordered (angular, linear);
- a pose is a 4x4 homogeneous matrix [[R, r], [0, 1]];
- Ad_g = [[R, 0], [r~ R, R]] and ad_xi = [[k~, 0], [p~, k~]] for xi = (k, p).
"""

import numpy as np
from scipy.linalg import expm_frechet, solve

from hdlo_planning.config import get_settings
from hdlo_planning.exceptions import AngleNearPi, OutOfRange, SingularTangent

# below this rotation angle the closed forms are replaced by Taylor expansions
SMALL_ANGLE = 1e-8
# the tangent-operator coefficients lose precision below this angle
SERIES_ANGLE = 1e-2
SERIES_TERMS = 10

_I3 = np.eye(3)
_I6 = np.eye(6)


def _margin(margin):
    return get_settings().log_angle_margin if margin is None else margin


def skew(w):
    """Return w~ (skew-symmetric) from a 3-vector."""
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy],
                     [wz, 0.0, -wx],
                     [-wy, wx, 0.0]])


def unskew(W):
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def hat(xi):
    """4x4 matrix representation of a twist."""
    X = np.zeros((4, 4))
    X[:3, :3] = skew(xi[:3])
    X[:3, 3] = xi[3:]
    return X


def vee(X):
    return np.concatenate([unskew(X[:3, :3]), X[:3, 3]])


def make_pose(rotation=None, translation=None):
    g = np.eye(4)
    if rotation is not None:
        g[:3, :3] = np.asarray(rotation, dtype=float).reshape(3, 3)
    if translation is not None:
        g[:3, 3] = np.asarray(translation, dtype=float).reshape(3)
    return g


def pose_inverse(g):
    R = g[:3, :3]
    gi = np.eye(4)
    gi[:3, :3] = R.T
    gi[:3, 3] = -R.T @ g[:3, 3]
    return gi


def exp_so3(k):
    k = np.asarray(k, dtype=float)
    theta = np.linalg.norm(k)
    K = skew(k)
    if theta < SMALL_ANGLE:
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = 2.0 * np.sin(0.5 * theta)**2 / theta**2
    return _I3 + a * K + b * (K @ K)


def exp_se3(xi):
    """Closed-form exponential of a twist."""
    xi = np.asarray(xi, dtype=float)
    k, p = xi[:3], xi[3:]
    theta = np.linalg.norm(k)
    K = skew(k)
    K2 = K @ K
    if theta < SMALL_ANGLE:
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
        c = 1.0 / 6.0 - theta**2 / 120.0
    else:
        s = np.sin(theta)
        a = s / theta
        b = 2.0 * np.sin(0.5 * theta)**2 / theta**2
        c = (theta - s) / theta**3
    g = np.eye(4)
    g[:3, :3] = _I3 + a * K + b * K2
    g[:3, 3] = (_I3 + b * K + c * K2) @ p
    return g


def log_so3(R, margin=None):
    """Rotation vector of R and its angle; refuses angles within ``margin`` of pi."""
    margin = _margin(margin)
    w = 0.5 * unskew(R - R.T)
    s = np.linalg.norm(w)
    c = 0.5 * (np.trace(R) - 1.0)
    theta = np.arctan2(s, c)
    if theta > np.pi - margin:
        raise AngleNearPi(theta, margin)
    if theta < SMALL_ANGLE:
        factor = 1.0 + theta**2 / 6.0
    else:
        factor = theta / s
    return factor * w, theta


def log_se3(g, margin=None):
    k, theta = log_so3(g[:3, :3], margin)
    K = skew(k)
    if theta < SMALL_ANGLE:
        coef = 1.0 / 12.0 + theta**2 / 720.0
    else:
        half = 0.5 * theta
        coef = (1.0 - half * np.cos(half) / np.sin(half)) / theta**2
    V_inv = _I3 - 0.5 * K + coef * (K @ K)
    return np.concatenate([k, V_inv @ g[:3, 3]])


def adjoint(g):
    R = g[:3, :3]
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = R
    Ad[3:, 3:] = R
    Ad[3:, :3] = skew(g[:3, 3]) @ R
    return Ad


def adjoint_inverse(g):
    """Ad(g)^-1 = Ad(g^-1) without inverting g first."""
    Rt = g[:3, :3].T
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = Rt
    Ad[3:, 3:] = Rt
    Ad[3:, :3] = -Rt @ skew(g[:3, 3])
    return Ad


def small_adjoint(xi):
    K = skew(xi[:3])
    ad = np.zeros((6, 6))
    ad[:3, :3] = K
    ad[3:, 3:] = K
    ad[3:, :3] = skew(xi[3:])
    return ad


def bracket(x, y):
    """ad_x y evaluated along axis 0, broadcasting over the trailing axes."""
    kx, px = x[:3], x[3:]
    ky, py = y[:3], y[3:]
    return np.concatenate([
        np.cross(kx, ky, axis=0),
        np.cross(kx, py, axis=0) + np.cross(px, ky, axis=0),
    ], axis=0)


def tangent_T(omega):
    """T(Omega) = int_0^1 exp(s ad_Omega) ds."""
    omega = np.asarray(omega, dtype=float)
    ad = small_adjoint(omega)
    theta = np.linalg.norm(omega[:3])
    if theta < SMALL_ANGLE:
        ad2 = ad @ ad
        return _I6 + ad / 2.0 + ad2 / 6.0 + ad2 @ ad / 24.0
    if theta < SERIES_ANGLE:
        T = _I6.copy()
        term = _I6
        for k in range(1, SERIES_TERMS + 1):
            term = term @ ad / (k + 1)
            T += term
        return T
    s, c = np.sin(theta), np.cos(theta)
    ad2 = ad @ ad
    ad3 = ad2 @ ad
    ad4 = ad3 @ ad
    c1 = (4.0 - 4.0 * c - theta * s) / (2.0 * theta**2)
    c2 = (4.0 * theta - 5.0 * s + theta * c) / (2.0 * theta**3)
    c3 = (2.0 - 2.0 * c - theta * s) / (2.0 * theta**4)
    c4 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * theta**5)
    return _I6 + c1 * ad + c2 * ad2 + c3 * ad3 + c4 * ad4


def tangent_T_inverse(omega, margin=None):
    margin = _margin(margin)
    theta = np.linalg.norm(np.asarray(omega, dtype=float)[:3])
    turns = np.round(theta / (2.0 * np.pi))
    if turns >= 1 and abs(theta - 2.0 * np.pi * turns) < margin:
        raise SingularTangent(theta, margin)
    return solve(tangent_T(omega), _I6)


def tangent_T_derivatives(omega):
    """
    Partial derivatives of T with respect to the six components of Omega.

    T is the upper-right block of expm([[ad_Omega, I], [0, 0]]), so each
    partial is the matching block of a Frechet derivative of expm.
    Returns an array D with D[a] = dT/dOmega_a.
    """
    M = np.zeros((12, 12))
    M[:6, :6] = small_adjoint(omega)
    M[:6, 6:] = _I6
    D = np.empty((6, 6, 6))
    E = np.zeros((12, 12))
    for a in range(6):
        E[:6, :6] = small_adjoint(_I6[a])
        D[a] = expm_frechet(M, E, compute_expm=False)[:6, 6:]
    return D


def locate(xs, x):
    """Segment index j and fraction alpha with xs[j] <= x <= xs[j+1]."""
    xs = np.asarray(xs, dtype=float)
    if x < xs[0] or x > xs[-1] or not np.isfinite(x):
        raise OutOfRange(f"abscissa {x!r} outside [{xs[0]}, {xs[-1]}]")
    if len(xs) == 1:
        return 0, 0.0
    j = int(np.searchsorted(xs, x, side="right")) - 1
    j = min(max(j, 0), len(xs) - 2)
    alpha = (x - xs[j]) / (xs[j + 1] - xs[j])
    return j, alpha


def interpolate_pose(knots, x_query, margin=None):
    """Zero-order geodesic interpolation between sorted (X_j, g_j) knots."""
    xs = [x for x, _ in knots]
    j, alpha = locate(xs, x_query)
    g_j = knots[j][1]
    if alpha == 0.0:
        return np.array(g_j, dtype=float)
    omega = log_se3(pose_inverse(g_j) @ knots[j + 1][1], margin)
    return g_j @ exp_se3(alpha * omega)
