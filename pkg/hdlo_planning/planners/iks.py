# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""
Inverse kinetostatics: find an equilibrium (q, u, lambda_bar) and aperture
abscissae whose end-effector meets a goal, by minimizing half the squared
goal error subject to statics, closures, apertures and joint limits.
"""

import logging
from dataclasses import dataclass

import numpy as np

from hdlo_planning.config import get_settings
from hdlo_planning.env_constraints import initial_crossings
from hdlo_planning.exceptions import GoalUnreachable
from hdlo_planning.nlp import NlpProblem, SolverOptions, SolverReport, max_violation, solve
from hdlo_planning.planners.keyframe import KeyframeBlock, KinematicsMemo, goal_error
from hdlo_planning.statics import EquilibriumState, solve_forward_statics

logger = logging.getLogger(__name__)


@dataclass
class IksResult:
    state: EquilibriumState
    x_dagger: np.ndarray
    report: SolverReport
    distance: float
    initial_distance: float

    def to_dict(self):
        return {
            "q": self.state.q.tolist(), "u": self.state.u.tolist(),
            "lambda_bar": self.state.lambda_bar.tolist(), "x_dagger": self.x_dagger.tolist(),
            "goal_distance": self.distance, "initial_goal_distance": self.initial_distance,
            "report": self.report.to_dict(),
        }


def default_start(asm):
    """Equilibrium at the actuated coordinates closest to zero inside the joint limits."""
    lay = asm.layout
    seed = EquilibriumState.zeros(asm)
    q_a = np.clip(np.zeros(lay.n_a), lay.lower[lay.actuated], lay.upper[lay.actuated])
    return solve_forward_statics(asm, q_a, seed)


def build_iks_problem(asm, goal, apertures=(), derivative_blocks=None):
    """NlpProblem over x = [q, u, lambda_bar, X] with its keyframe block."""
    goal.validate(asm)
    block = KeyframeBlock(asm, apertures, derivative_blocks)
    memo = KinematicsMemo(asm)

    def objective(x, derivatives):
        eps, D = goal_error(asm, memo(block.q(x)), goal, derivatives)
        f = 0.5 * float(eps @ eps)
        if not derivatives:
            return f, None
        grad = np.zeros(block.size)
        grad[:block.n_d] = D.T @ eps
        return f, grad

    lower, upper = block.bounds()
    problem = NlpProblem(
        n=block.size, objective=objective, lower=lower, upper=upper,
        equality=lambda x, d: block.equality(x, d, memo), n_eq=block.n_eq,
        inequality=(lambda x, d: block.inequality(x, d, memo)) if block.m else None, n_in=block.n_in,
        name=f"iks[{asm.name}]",
    )
    return problem, block, (lambda x, d: block.goal(x, goal, d, memo))


def solve_iks(asm, goal, apertures=(), x0=None, x_dagger0=None, options=None, goal_tol=None,
              derivative_blocks=None):
    """
    Solve the inverse kinetostatics problem from the equilibrium ``x0``.

    Raises GoalUnreachable when the solver settles at a feasible, (nearly)
    stationary point whose goal distance exceeds ``goal_tol``; the
    exception carries the IksResult.
    """
    goal_tol = get_settings().goal_tol if goal_tol is None else goal_tol
    options = options or SolverOptions()
    problem, block, goal_rows = build_iks_problem(asm, goal, apertures, derivative_blocks)
    x0 = default_start(asm) if x0 is None else x0
    if x_dagger0 is None:
        x_dagger0 = initial_crossings(KinematicsMemo(asm)(x0.q), block.apertures) if block.m else np.zeros(0)
    z0 = block.join(x0, x_dagger0)
    initial_distance = float(np.linalg.norm(goal_rows(z0, False)[0]))

    if initial_distance <= goal_tol and max_violation(problem, z0) <= options.tol_feas:
        logger.info("%s: start already meets the goal (distance %.2e)", problem.name, initial_distance)
        report = SolverReport(status="converged", iterations=0, objective=0.5 * initial_distance**2,
                              max_violation=max_violation(problem, z0), kkt_residual=0.0, wall_time=0.0,
                              method=options.resolved().method, message="initial point meets the goal")
        return IksResult(x0.copy(), np.asarray(x_dagger0, dtype=float), report, initial_distance, initial_distance)

    z, report = solve(problem, z0, options, extra_residual=goal_rows)
    state, x_dagger = block.split(z)
    distance = float(np.linalg.norm(goal_rows(z, False)[0])) if report.status != "numeric_failure" else np.nan
    result = IksResult(state, x_dagger, report, distance, initial_distance)
    logger.info("%s: goal distance %.3e -> %.3e (%s)", problem.name, initial_distance, distance, report.status)
    stalled = (report.status == "max_iter" and report.max_violation <= options.tol_feas
               and report.kkt_residual <= np.sqrt(options.tol_opt))
    if (report.converged or stalled) and distance > goal_tol:
        raise GoalUnreachable(distance, goal_tol, state=result)
    return result
