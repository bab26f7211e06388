# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, lstsq, lu_factor, lu_solve

from hdlo_planning.assembly import (
    assemble_global,
    closure_error,
    closure_error_jacobian,
    closure_force_jacobian,
    closure_jacobian,
    forward_kinematics,
    gravity_force,
    gravity_jacobian,
    selection_matrix,
)
from hdlo_planning.config import get_settings
from hdlo_planning.exceptions import DimensionMismatch, HdloError, NoConvergence
from hdlo_planning.nlp import central_difference_jacobian

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
BACKTRACK = 0.5
MIN_STEP = 1e-10
REGULARIZATION = 1e-12


@dataclass
class EquilibriumState:
    q: np.ndarray
    u: np.ndarray
    lambda_bar: np.ndarray

    @classmethod
    def zeros(cls, asm):
        lay = asm.layout
        return cls(q=np.zeros(lay.n_d), u=np.zeros(lay.n_a), lambda_bar=np.zeros(lay.n_c))

    @classmethod
    def from_vector(cls, asm, v):
        lay = asm.layout
        v = np.asarray(v, dtype=float)
        if v.shape != (lay.n_d + lay.n_a + lay.n_c,):
            raise DimensionMismatch(f"state vector has shape {v.shape}, expected {lay.n_d + lay.n_a + lay.n_c}")
        return cls(q=v[:lay.n_d].copy(), u=v[lay.n_d:lay.n_d + lay.n_a].copy(),
                   lambda_bar=v[lay.n_d + lay.n_a:].copy())

    def as_vector(self):
        return np.concatenate([self.q, self.u, self.lambda_bar])

    def copy(self):
        return EquilibriumState(self.q.copy(), self.u.copy(), self.lambda_bar.copy())


@dataclass
class StaticsResidual:
    r_force: np.ndarray
    r_closure: np.ndarray

    def as_vector(self):
        return np.concatenate([self.r_force, self.r_closure])

    def norm_inf(self):
        v = self.as_vector()
        return float(np.max(np.abs(v))) if v.size else 0.0


@dataclass
class NewtonInfo:
    iterations: int
    residual: float


def _check_state(asm, state):
    lay = asm.layout
    if (np.shape(state.q) != (lay.n_d,) or np.shape(state.u) != (lay.n_a,)
            or np.shape(state.lambda_bar) != (lay.n_c,)):
        raise DimensionMismatch(
            f"state shapes {np.shape(state.q)}, {np.shape(state.u)}, {np.shape(state.lambda_bar)} "
            f"do not match n_d={lay.n_d}, n_a={lay.n_a}, n_c={lay.n_c}")


def residual(asm, state, cache=None):
    """[Kq - F(q) - Bu - A^T lambda ; e_c(q)]."""
    _check_state(asm, state)
    cache = cache if cache is not None else forward_kinematics(asm, state.q)
    K, F, B = assemble_global(asm, cache, state.q)
    A = closure_jacobian(asm, cache)
    r_force = K @ state.q - F - B @ state.u - A.T @ state.lambda_bar
    return StaticsResidual(r_force=r_force, r_closure=closure_error(asm, cache))


def tolerance_scale(asm, q):
    Kq = asm.layout.stiffness @ q
    return max(1.0, float(np.max(np.abs(Kq))) if Kq.size else 1.0)


def load_jacobian(asm, q, lambda_bar, derivative_blocks=None, cache=None):
    """dF/dq + d(A^T lambda)/dq, analytic or by central differences."""
    derivative_blocks = derivative_blocks or get_settings().derivative_blocks
    if derivative_blocks == "fd":
        def load(qq):
            c = forward_kinematics(asm, qq)
            return gravity_force(asm, c) + closure_jacobian(asm, c).T @ lambda_bar
        return central_difference_jacobian(load, q)
    if cache is None or not cache.matches(q, second_order=True):
        cache = forward_kinematics(asm, q, second_order=True)
    return gravity_jacobian(asm, cache) + closure_force_jacobian(asm, cache, lambda_bar)


def residual_jacobian(asm, state, derivative_blocks=None, cache=None):
    """
    d(residual)/d(q, u, lambda_bar):

        [ K - dF/dq - d(A^T lambda)/dq   -B   -A^T ]
        [ de_c/dq                          0     0  ]
    """
    _check_state(asm, state)
    lay = asm.layout
    derivative_blocks = derivative_blocks or get_settings().derivative_blocks
    if cache is None or not cache.matches(state.q, second_order=derivative_blocks == "analytic"):
        cache = forward_kinematics(asm, state.q, second_order=derivative_blocks == "analytic")
    n_d, n_a, n_c = lay.n_d, lay.n_a, lay.n_c
    Jac = np.zeros((n_d + n_c, n_d + n_a + n_c))
    Jac[:n_d, :n_d] = lay.stiffness - load_jacobian(asm, state.q, state.lambda_bar, derivative_blocks, cache)
    Jac[:n_d, n_d:n_d + n_a] = -selection_matrix(asm)
    Jac[:n_d, n_d + n_a:] = -closure_jacobian(asm, cache).T
    Jac[n_d:, :n_d] = closure_error_jacobian(asm, cache)
    return Jac


def _newton(asm, state, free_q, solve_u, max_iter, tol, derivative_blocks, label):
    """
    Damped Newton on the statics residual. ``free_q`` are the q indices solved
    for; with ``solve_u`` the actuated rows are dropped and u is recovered
    from them afterwards.
    """
    lay = asm.layout
    n_d, n_a = lay.n_d, lay.n_a
    rows = np.concatenate([lay.passive if solve_u else np.arange(n_d), n_d + np.arange(lay.n_c)])
    cols = np.concatenate([free_q, n_d + n_a + np.arange(lay.n_c)])

    def evaluate(s):
        cache = forward_kinematics(asm, s.q, second_order=derivative_blocks == "analytic")
        if solve_u:
            s.u = np.zeros(n_a)
            res = residual(asm, s, cache)
            s.u = res.r_force[lay.actuated].copy()
            res.r_force[lay.actuated] = 0.0
        else:
            res = residual(asm, s, cache)
        return res.as_vector()[rows], cache

    def merit(s):
        try:
            r, _ = evaluate(s)
        except HdloError:
            return np.inf
        return 0.5 * float(r @ r)

    state = state.copy()
    r, cache = evaluate(state)
    for it in range(max_iter + 1):
        norm = float(np.max(np.abs(r))) if r.size else 0.0
        if norm < tol * tolerance_scale(asm, state.q):
            logger.debug("%s converged in %d iterations (residual %.3e)", label, it, norm)
            return state, NewtonInfo(iterations=it, residual=norm)
        if it == max_iter:
            break
        Jac = residual_jacobian(asm, state, derivative_blocks, cache)[np.ix_(rows, cols)]
        Jac += REGULARIZATION * np.eye(len(rows))
        try:
            step = -lu_solve(lu_factor(Jac, check_finite=True), r)
            if not np.all(np.isfinite(step)):
                raise LinAlgError("non-finite Newton step")
        except (LinAlgError, ValueError):
            step = -lstsq(Jac, r)[0]

        phi = 0.5 * float(r @ r)
        t = 1.0
        while t >= MIN_STEP:
            trial = state.copy()
            z = np.concatenate([trial.q[free_q], trial.lambda_bar]) + t * step
            trial.q[free_q] = z[:len(free_q)]
            trial.lambda_bar = z[len(free_q):]
            if merit(trial) <= (1.0 - 2.0 * ARMIJO_C * t) * phi:
                break
            t *= BACKTRACK
        else:
            raise NoConvergence(it, norm, f"{label}: line search failed")
        state = trial
        r, cache = evaluate(state)
    raise NoConvergence(max_iter, norm, label)


def solve_forward_statics(asm, q_a_fixed, seed, max_iter=None, tol=None, derivative_blocks=None,
                          return_info=False):
    """Equilibrium with the actuated coordinates pinned to ``q_a_fixed``."""
    settings = get_settings()
    lay = asm.layout
    _check_state(asm, seed)
    q_a_fixed = np.asarray(q_a_fixed, dtype=float)
    if q_a_fixed.shape != (lay.n_a,):
        raise DimensionMismatch(f"expected {lay.n_a} actuated values, got shape {q_a_fixed.shape}")
    state = seed.copy()
    state.q[lay.actuated] = q_a_fixed
    state, info = _newton(
        asm, state, lay.passive, True,
        settings.statics_max_iter if max_iter is None else max_iter,
        settings.statics_tol if tol is None else tol,
        derivative_blocks or settings.derivative_blocks, "forward statics")
    return (state, info) if return_info else state


def project_to_manifold(asm, q_a_candidate, seed, **kwargs):
    """Forward statics used by the sampler; NoConvergence marks an infeasible extension."""
    return solve_forward_statics(asm, q_a_candidate, seed, **kwargs)


def solve_effort_statics(asm, u_fixed, seed, max_iter=None, tol=None, derivative_blocks=None,
                         return_info=False):
    """Equilibrium under prescribed actuation efforts; every q is free."""
    settings = get_settings()
    lay = asm.layout
    _check_state(asm, seed)
    state = seed.copy()
    state.u = np.asarray(u_fixed, dtype=float).reshape(lay.n_a).copy()
    state, info = _newton(
        asm, state, np.arange(lay.n_d), False,
        settings.statics_max_iter if max_iter is None else max_iter,
        settings.statics_tol if tol is None else tol,
        derivative_blocks or settings.derivative_blocks, "effort statics")
    return (state, info) if return_info else state


def is_equilibrium(asm, state, tol=1e-8):
    return residual(asm, state).norm_inf() < tol * tolerance_scale(asm, state.q)
