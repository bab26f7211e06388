# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""
Keyframe trajectory optimization by direct transcription.

Keyframes 1..N each carry x_k = [q, u, lambda_bar, X] with their own
equilibrium, closure and aperture constraints; keyframe 0 is the fixed
start. The terminal goal error eps(q_N) = 0 couples only x_N, so the
constraint Jacobian is block diagonal plus one trailing block row.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy import sparse

from hdlo_planning.assembly import forward_kinematics
from hdlo_planning.config import get_settings
from hdlo_planning.env_constraints import aperture_constraints, initial_crossings
from hdlo_planning.nlp import NlpProblem, SolverOptions, SolverReport, solve
from hdlo_planning.planners.iks import default_start, solve_iks
from hdlo_planning.planners.keyframe import KeyframeBlock, KinematicsMemo, goal_distance
from hdlo_planning.planners.trajectory import PathWeights, path_cost, path_cost_gradient, warm_start
from hdlo_planning.statics import residual

logger = logging.getLogger(__name__)

DEFAULT_KEYFRAMES = 10


@dataclass
class Trajectory:
    states: list
    x_daggers: np.ndarray
    report: SolverReport
    goal_distance: float
    residuals: pd.DataFrame
    warm: bool = True
    apertures_active: bool = True
    iks_report: Optional[SolverReport] = None
    weights: PathWeights = field(default_factory=PathWeights)

    @property
    def n_keyframes(self):
        return len(self.states) - 1

    def cost(self, weights=None):
        return path_cost(self.states, weights or self.weights)

    def actuated_path(self, asm):
        return np.array([s.q[asm.layout.actuated] for s in self.states])

    def to_dict(self):
        return {
            "keyframes": [
                {"k": k, "q": s.q.tolist(), "u": s.u.tolist(), "lambda_bar": s.lambda_bar.tolist(),
                 "x_dagger": self.x_daggers[k].tolist()}
                for k, s in enumerate(self.states)
            ],
            "residuals": self.residuals.to_dict(orient="records"),
            "goal_distance": self.goal_distance,
            "path_cost": self.cost(),
            "warm": self.warm,
            "apertures_active": self.apertures_active,
            "report": self.report.to_dict(),
            "iks_report": self.iks_report.to_dict() if self.iks_report else None,
        }


def keyframe_residuals(asm, states, x_daggers, apertures=()):
    """Per-keyframe residual table: force, closure, aperture equality and inequality."""
    lay = asm.layout
    rows = []
    for k, (state, xd) in enumerate(zip(states, x_daggers)):
        cache = forward_kinematics(asm, state.q)
        res = residual(asm, state, cache)
        row = {
            "keyframe": k,
            "force": float(np.max(np.abs(res.r_force), initial=0.0)),
            "closure": float(np.max(np.abs(res.r_closure), initial=0.0)) if lay.n_c else 0.0,
            "aperture_eq": np.nan,
            "aperture_in": np.nan,
        }
        if apertures:
            c_e, c_in = aperture_constraints(asm, cache, apertures, xd)
            row["aperture_eq"] = float(np.max(np.abs(c_e)))
            row["aperture_in"] = float(np.max(c_in))
        rows.append(row)
    return pd.DataFrame(rows)


def violated_keyframes(table, tol):
    bad = ((table["force"] > tol) | (table["closure"] > tol)
           | (table["aperture_eq"].fillna(0.0) > tol) | (table["aperture_in"].fillna(-1.0) > tol))
    return table.loc[bad, "keyframe"].tolist()


def initial_keyframes(asm, block, z0, zf, N, warm=True):
    """Warm start by interpolation with X re-seeded from each keyframe's geometry, or a constant cold start."""
    if not warm:
        return np.tile(z0, (N + 1, 1))
    rows = warm_start(z0, zf, N)
    if block.m:
        for k in range(1, N):
            cache = forward_kinematics(asm, rows[k, :block.n_d])
            rows[k, block.n_state:] = initial_crossings(cache, block.apertures)
    return rows


def build_trajopt_problem(asm, goal, block, z0, N, weights=None):
    """NlpProblem over the stacked keyframes 1..N."""
    goal.validate(asm)
    p = block.size
    weights = weights or PathWeights()
    dims = (block.n_d, block.n_a, block.n_c)
    memos = [KinematicsMemo(asm) for _ in range(N)]
    start = z0[:block.n_state]

    def frames(Z):
        return np.asarray(Z, dtype=float).reshape(N, p)

    def objective(Z, derivatives):
        X = frames(Z)
        V = np.vstack([start, X[:, :block.n_state]])
        f = path_cost(V, weights, dims)
        if not derivatives:
            return f, None
        G = np.zeros((N, p))
        G[:, :block.n_state] = path_cost_gradient(V, weights, dims)[1:]
        return f, G.ravel()

    def equality(Z, derivatives):
        X = frames(Z)
        parts = [block.equality(X[k], derivatives, memos[k]) for k in range(N)]
        eps, goal_jac = block.goal(X[-1], goal, derivatives, memos[-1])
        values = np.concatenate([v for v, _ in parts] + [eps])
        if not derivatives:
            return values, None
        terminal = sparse.hstack([sparse.csr_matrix((goal.n_rows, (N - 1) * p)), sparse.csr_matrix(goal_jac)])
        jac = sparse.vstack([sparse.block_diag([J for _, J in parts]), terminal], format="csr")
        return values, jac

    def inequality(Z, derivatives):
        X = frames(Z)
        parts = [block.inequality(X[k], derivatives, memos[k]) for k in range(N)]
        values = np.concatenate([v for v, _ in parts])
        if not derivatives:
            return values, None
        return values, sparse.block_diag([J for _, J in parts], format="csr")

    lower, upper = block.bounds()
    return NlpProblem(
        n=N * p, objective=objective, lower=np.tile(lower, N), upper=np.tile(upper, N),
        equality=equality, n_eq=N * block.n_eq + goal.n_rows,
        inequality=inequality if block.m else None, n_in=N * block.n_in,
        sparse=True, name=f"trajopt[{asm.name}]",
    )


def solve_trajopt(asm, goal, apertures=(), x0=None, N=DEFAULT_KEYFRAMES, weights=None, warm=True,
                  options=None, goal_tol=None, derivative_blocks=None, iks_result=None):
    """
    Optimize N keyframes from the equilibrium ``x0`` to ``goal``.

    The warm start interpolates between x0 and an inverse-kinetostatics
    solution (``iks_result`` when given); ``warm=False`` starts every
    keyframe at x0.
    """
    goal_tol = get_settings().goal_tol if goal_tol is None else goal_tol
    options = options or SolverOptions()
    weights = weights or PathWeights()
    block = KeyframeBlock(asm, apertures, derivative_blocks)
    x0 = default_start(asm) if x0 is None else x0
    xd0 = initial_crossings(forward_kinematics(asm, x0.q), block.apertures) if block.m else np.zeros(0)
    z0 = block.join(x0, xd0)

    iks_report = None
    zf = z0
    if warm:
        if iks_result is None:
            iks_result = solve_iks(asm, goal, apertures, x0, xd0, options, goal_tol, derivative_blocks)
        iks_report = iks_result.report
        zf = block.join(iks_result.state, iks_result.x_dagger)
    rows = initial_keyframes(asm, block, z0, zf, N, warm)

    problem = build_trajopt_problem(asm, goal, block, z0, N, weights)
    Z, report = solve(problem, rows[1:].ravel(), options)
    X = Z.reshape(N, block.size)
    states = [x0.copy()] + [block.split(x)[0] for x in X]
    x_daggers = np.vstack([xd0.reshape(1, block.m), X[:, block.n_state:]])
    table = keyframe_residuals(asm, states, x_daggers, block.apertures)
    distance = goal_distance(asm, forward_kinematics(asm, states[-1].q), goal)

    if not report.converged:
        logger.warning("%s: %s; keyframes over tolerance: %s", problem.name, report.status,
                       violated_keyframes(table.iloc[1:], options.tol_feas))
    logger.info("%s: %s start, %d iterations, terminal distance %.3e, path cost %.6e",
                problem.name, "warm" if warm else "cold", report.iterations, distance,
                path_cost(states, weights))
    return Trajectory(states=states, x_daggers=x_daggers, report=report, goal_distance=distance,
                      residuals=table, warm=warm, apertures_active=bool(block.m), iks_report=iks_report,
                      weights=weights)
