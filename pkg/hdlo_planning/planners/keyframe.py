# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""
Decision block of one keyframe, x = [q, u, lambda_bar, X], and the
constraints every keyframe carries: static equilibrium, closure and
apertures.
"""

from dataclasses import dataclass, field

import numpy as np

from hdlo_planning.assembly import (
    end_effector_jacobian,
    end_effector_pose,
    forward_kinematics,
)
from hdlo_planning.config import get_settings
from hdlo_planning.env_constraints import (
    aperture_constraint_jacobians,
    aperture_constraints,
    validate_apertures,
)
from hdlo_planning.exceptions import MalformedAssembly
from hdlo_planning.liegroup import adjoint, log_se3, log_so3, tangent_T_inverse
from hdlo_planning.statics import EquilibriumState, residual, residual_jacobian

GOAL_KINDS = {"position": 3, "orientation": 3, "full_pose": 6}


@dataclass(frozen=True)
class Goal:
    """End-effector regulation target: a 3-vector, a rotation or a 4x4 pose."""
    kind: str
    target: np.ndarray = field(default_factory=lambda: np.eye(4))
    name: str = "goal"

    @property
    def n_rows(self):
        return GOAL_KINDS[self.kind]

    def validate(self, asm):
        if self.kind not in GOAL_KINDS:
            raise MalformedAssembly("goal.kind", f"unknown goal kind {self.kind!r}")
        if asm.end_effector is None:
            raise MalformedAssembly("end_effector", "goals need an end-effector frame")
        shape = np.shape(self.target)
        expected = {"position": [(3,), (4, 4)], "orientation": [(3, 3), (4, 4)], "full_pose": [(4, 4)]}[self.kind]
        if shape not in expected:
            raise MalformedAssembly("goal.target", f"{self.kind} goal target has shape {shape}")
        if self.kind != "position":
            ee = asm.end_effector.link
            for c, closure in enumerate(asm.closures):
                if closure.kind == "spherical" and ee in (closure.frame_a.link, closure.frame_b.link):
                    raise MalformedAssembly(
                        "goal.kind", f"end-effector hangs on spherical closure {c}; only position goals apply")

    def position(self):
        t = np.asarray(self.target, dtype=float)
        return t if t.shape == (3,) else t[:3, 3]

    def rotation(self):
        return np.asarray(self.target, dtype=float)[:3, :3]


def goal_error(asm, cache, goal, derivatives=True):
    """Goal error eps(q) and d eps / dq (None without derivatives)."""
    g = end_effector_pose(asm, cache)
    J = end_effector_jacobian(asm, cache) if derivatives else None
    D = None
    if goal.kind == "full_pose":
        g_d = np.asarray(goal.target, dtype=float)
        rel = np.linalg.solve(g_d, g)
        eps = log_se3(rel)
        if derivatives:
            D = tangent_T_inverse(eps) @ adjoint(rel) @ J
    elif goal.kind == "position":
        eps = g[:3, 3] - goal.position()
        if derivatives:
            D = g[:3, :3] @ J[3:]
    else:
        rel = goal.rotation().T @ g[:3, :3]
        k, _ = log_so3(rel)
        eps = k
        if derivatives:
            T_inv = tangent_T_inverse(np.concatenate([k, np.zeros(3)]))[:3, :3]
            D = T_inv @ rel @ J[:3]
    return eps, D


def goal_distance(asm, cache, goal):
    return float(np.linalg.norm(goal_error(asm, cache, goal, derivatives=False)[0]))


def goal_from_state(asm, q, kind="full_pose"):
    g = end_effector_pose(asm, forward_kinematics(asm, q))
    return Goal(kind=kind, target=g[:3, 3].copy() if kind == "position" else g)


class KinematicsMemo:
    """Keeps the last forward-kinematics sweep and reuses it while q is unchanged."""

    def __init__(self, asm):
        self.asm = asm
        self.cache = None

    def __call__(self, q, second_order=False):
        if self.cache is None or not self.cache.matches(q, second_order):
            self.cache = forward_kinematics(self.asm, q, second_order)
        return self.cache


class KeyframeBlock:
    """Index bookkeeping and constraint evaluation of one keyframe."""

    def __init__(self, asm, apertures=(), derivative_blocks=None):
        validate_apertures(asm, apertures)
        lay = asm.layout
        self.asm = asm
        self.apertures = tuple(apertures)
        self.derivative_blocks = derivative_blocks or get_settings().derivative_blocks
        self.n_d, self.n_a, self.n_c = lay.n_d, lay.n_a, lay.n_c
        self.m = len(self.apertures)
        self.n_state = self.n_d + self.n_a + self.n_c
        self.size = self.n_state + self.m
        self.n_eq = self.n_d + self.n_c + self.m
        self.n_in = self.m

    def bounds(self):
        lay = self.asm.layout
        free = np.full(self.n_a + self.n_c, np.inf)
        lower = np.concatenate([lay.lower, -free, np.zeros(self.m)])
        upper = np.concatenate([lay.upper, free, np.ones(self.m)])
        return lower, upper

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return EquilibriumState.from_vector(self.asm, x[:self.n_state]), x[self.n_state:].copy()

    def join(self, state, x_dagger=()):
        return np.concatenate([state.as_vector(), np.asarray(x_dagger, dtype=float).reshape(self.m)])

    def q(self, x):
        return np.asarray(x[:self.n_d], dtype=float)

    def equality(self, x, derivatives, memo):
        """[statics residual ; c_e] and its Jacobian over the keyframe block."""
        state, xd = self.split(x)
        second = derivatives and self.derivative_blocks == "analytic"
        cache = memo(state.q, second)
        values = [residual(self.asm, state, cache).as_vector()]
        if self.m:
            values.append(aperture_constraints(self.asm, cache, self.apertures, xd)[0])
        values = np.concatenate(values)
        if not derivatives:
            return values, None
        jac = np.zeros((self.n_eq, self.size))
        jac[:self.n_d + self.n_c, :self.n_state] = residual_jacobian(
            self.asm, state, self.derivative_blocks, cache)
        if self.m:
            ap = aperture_constraint_jacobians(self.asm, cache, self.apertures, xd)
            jac[self.n_d + self.n_c:, :self.n_d] = ap.ce_q
            jac[self.n_d + self.n_c:, self.n_state:] = ap.ce_x
        return values, jac

    def inequality(self, x, derivatives, memo):
        state, xd = self.split(x)
        cache = memo(state.q)
        values = aperture_constraints(self.asm, cache, self.apertures, xd)[1]
        if not derivatives:
            return values, None
        ap = aperture_constraint_jacobians(self.asm, cache, self.apertures, xd)
        jac = np.zeros((self.m, self.size))
        jac[:, :self.n_d] = ap.cin_q
        jac[:, self.n_state:] = ap.cin_x
        return values, jac

    def goal(self, x, goal, derivatives, memo):
        """Goal error rows over the keyframe block."""
        cache = memo(self.q(x))
        eps, D = goal_error(self.asm, cache, goal, derivatives)
        if not derivatives:
            return eps, None
        jac = np.zeros((goal.n_rows, self.size))
        jac[:, :self.n_d] = D
        return eps, jac

