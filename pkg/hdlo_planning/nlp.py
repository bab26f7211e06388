# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""
Constrained NLP layer.

Evaluators take ``(x, derivatives)`` and return ``(values, jacobian)``; the
jacobian is ``None`` when ``derivatives`` is False. Objective evaluators
return ``(f, gradient)``. Inequalities follow the convention c_in(x) <= 0.
"""

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.linalg import lstsq
from scipy.optimize import BFGS, Bounds, NonlinearConstraint, minimize

from hdlo_planning.config import get_settings
from hdlo_planning.exceptions import DimensionMismatch, HdloError

logger = logging.getLogger(__name__)

STATUSES = ("converged", "max_iter", "infeasible", "numeric_failure")
METHODS = ("interior_point", "sqp", "augmented_lagrangian")
# smaller problems hand dense Jacobians to trust-constr; its sparse factorization rejects rank-deficient rows
SPARSE_MIN_VARIABLES = 200


def _dense(J):
    return J.toarray() if sparse.issparse(J) else np.atleast_2d(np.asarray(J, dtype=float))


def central_difference_jacobian(fun, x, step=1e-6):
    """Central differences with per-variable step ``step * max(1, |x_i|)``; scalar outputs give a 1 x n row."""
    x = np.asarray(x, dtype=float)
    columns = []
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        columns.append((np.atleast_1d(fun(xp)) - np.atleast_1d(fun(xm))) / (xp[i] - xm[i]))
    if not columns:
        return np.zeros((np.atleast_1d(fun(x)).size, 0))
    return np.column_stack(columns)


@dataclass
class NlpProblem:
    n: int
    objective: Callable
    lower: np.ndarray
    upper: np.ndarray
    equality: Optional[Callable] = None
    inequality: Optional[Callable] = None
    n_eq: int = 0
    n_in: int = 0
    sparse: bool = False
    name: str = "nlp"

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (self.n,) or self.upper.shape != (self.n,):
            raise DimensionMismatch(f"{self.name}: bounds must have shape ({self.n},)")
        if (self.equality is None) != (self.n_eq == 0) or (self.inequality is None) != (self.n_in == 0):
            raise DimensionMismatch(f"{self.name}: constraint evaluators and counts disagree")


@dataclass
class SolverOptions:
    method: Optional[str] = None
    max_iter: Optional[int] = None
    tol_opt: float = 1e-6
    tol_feas: float = 1e-8
    jacobian: str = "analytic"
    fd_step: float = 1e-6
    polish: bool = True

    def resolved(self):
        settings = get_settings()
        method = self.method or settings.nlp_method
        if method not in METHODS:
            raise ValueError(f"unknown NLP method {method!r}; choose from {METHODS}")
        if self.jacobian not in ("analytic", "fd"):
            raise ValueError(f"jacobian mode must be 'analytic' or 'fd', got {self.jacobian!r}")
        max_iter = self.max_iter or settings.nlp_max_iter
        return SolverOptions(method=method, max_iter=max_iter, tol_opt=self.tol_opt, tol_feas=self.tol_feas,
                             jacobian=self.jacobian, fd_step=self.fd_step, polish=self.polish)


@dataclass
class SolverReport:
    status: str
    iterations: int
    objective: float
    max_violation: float
    kkt_residual: float
    wall_time: float
    method: str = ""
    message: str = ""
    evaluations: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.status == "converged"

    def to_dict(self):
        return {
            "status": self.status, "iterations": self.iterations, "objective": self.objective,
            "max_violation": self.max_violation, "kkt_residual": self.kkt_residual,
            "wall_time": self.wall_time, "method": self.method, "message": self.message,
            "evaluations": dict(self.evaluations),
        }


class _Evaluator:
    """Memoizes the last evaluation per block and optionally replaces Jacobians by central differences."""

    def __init__(self, problem, jacobian="analytic", fd_step=1e-6):
        self.problem = problem
        self.fd = jacobian == "fd"
        self.fd_step = fd_step
        self.counts = Counter()
        self._memo = {}
        self.last_good = None
        self.sparse = problem.sparse and problem.n >= SPARSE_MIN_VARIABLES

    def _call(self, key, fun, x, derivatives):
        memo = self._memo.get(key)
        if memo is not None and np.array_equal(memo[0], x) and (memo[2] is not None or not derivatives):
            return memo[1], memo[2]
        if derivatives and self.fd:
            values, _ = fun(x, False)
            jac = central_difference_jacobian(lambda z: fun(z, False)[0], x, self.fd_step)
            self.counts[key + "_fd"] += 2 * x.size
        else:
            values, jac = fun(x, derivatives)
        self.counts[key] += 1
        self._memo[key] = (np.array(x, dtype=float), values, jac)
        self.last_good = np.array(x, dtype=float)
        return values, jac

    def f(self, x):
        return float(self._call("objective", self.problem.objective, x, False)[0])

    def grad(self, x):
        return np.ravel(_dense(self._call("objective", self.problem.objective, x, True)[1]))

    def eq_values(self, x):
        return np.asarray(self._call("equality", self.problem.equality, x, False)[0], dtype=float)

    def eq_jac(self, x):
        J = self._call("equality", self.problem.equality, x, True)[1]
        return J if self.sparse and sparse.issparse(J) else _dense(J)

    def in_values(self, x):
        return np.asarray(self._call("inequality", self.problem.inequality, x, False)[0], dtype=float)

    def in_jac(self, x):
        J = self._call("inequality", self.problem.inequality, x, True)[1]
        return J if self.sparse and sparse.issparse(J) else _dense(J)


def max_violation(problem, x, ev=None):
    ev = ev or _Evaluator(problem)
    parts = [0.0]
    if problem.n_eq:
        parts.append(float(np.max(np.abs(ev.eq_values(x)))))
    if problem.n_in:
        parts.append(float(np.max(ev.in_values(x))))
    parts.append(float(np.max(problem.lower - x, initial=0.0)))
    parts.append(float(np.max(x - problem.upper, initial=0.0)))
    return max(parts)


def kkt_residual(problem, x, ev=None, active_tol=1e-6):
    """Scaled stationarity residual with least-squares multipliers on the active set."""
    ev = ev or _Evaluator(problem)
    g = ev.grad(x)
    rows = []
    if problem.n_eq:
        rows.append(_dense(ev.eq_jac(x)))
    if problem.n_in:
        active = ev.in_values(x) > -active_tol
        if np.any(active):
            rows.append(_dense(ev.in_jac(x))[active])
    at_bound = (x <= problem.lower + active_tol) | (x >= problem.upper - active_tol)
    if np.any(at_bound):
        rows.append(np.eye(problem.n)[at_bound])
    r = g
    if rows:
        M = np.vstack(rows)
        y = lstsq(M.T, -g)[0]
        r = g + M.T @ y
    return float(np.max(np.abs(r), initial=0.0)) / max(1.0, float(np.max(np.abs(g), initial=0.0)))


def polish(problem, x, extra=None, tol=1e-12, max_iter=20, ev=None, feas_tol=1e-9):
    """
    Minimum-norm Gauss-Newton corrections on the equality constraints (and
    ``extra`` residuals, an evaluator of the same form) that keep bounds and
    do not increase the inequality violation.
    """
    ev = ev or _Evaluator(problem)

    def stacked(z, derivatives):
        vals, jacs = [], []
        if problem.n_eq:
            vals.append(ev.eq_values(z))
            if derivatives:
                jacs.append(_dense(ev.eq_jac(z)))
        if extra is not None:
            v, J = extra(z, derivatives)
            vals.append(np.asarray(v, dtype=float))
            if derivatives:
                jacs.append(_dense(J))
        return (np.concatenate(vals) if vals else np.zeros(0)), (np.vstack(jacs) if derivatives and jacs else None)

    def in_violation(z):
        return float(np.max(ev.in_values(z), initial=0.0)) if problem.n_in else 0.0

    def eq_norm(r):
        return float(np.max(np.abs(r[:problem.n_eq]), initial=0.0))

    x = np.clip(x, problem.lower, problem.upper)
    try:
        r, R = stacked(x, True)
    except HdloError:
        return x
    for _ in range(max_iter):
        norm = float(np.max(np.abs(r), initial=0.0))
        if norm < tol or R is None:
            break
        dx = -lstsq(R, r)[0]
        allowed = max(in_violation(x), 0.0) + 1e-12
        eq_allowed = max(eq_norm(r), feas_tol)
        t, accepted = 1.0, False
        while t > 1e-4:
            trial = np.clip(x + t * dx, problem.lower, problem.upper)
            try:
                r_trial, _ = stacked(trial, False)
                ok = (in_violation(trial) <= allowed and eq_norm(r_trial) <= eq_allowed
                      and np.max(np.abs(r_trial), initial=0.0) < norm)
            except HdloError:
                ok = False
            if ok:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        x = trial
        r, R = stacked(x, True)
    return x


def _solve_interior_point(problem, x0, opts, ev):
    constraints = []
    if problem.n_eq:
        constraints.append(NonlinearConstraint(ev.eq_values, 0.0, 0.0, jac=ev.eq_jac, hess=BFGS()))
    if problem.n_in:
        constraints.append(NonlinearConstraint(ev.in_values, -np.inf, 0.0, jac=ev.in_jac, hess=BFGS()))
    finite = np.isfinite(problem.lower) | np.isfinite(problem.upper)
    bounds = Bounds(problem.lower, problem.upper) if np.any(finite) else None
    res = minimize(
        ev.f, x0, jac=ev.grad, hess=BFGS(), method="trust-constr", bounds=bounds, constraints=constraints,
        options={"maxiter": opts.max_iter, "gtol": opts.tol_opt, "xtol": 1e-14, "barrier_tol": 1e-10,
                 "sparse_jacobian": True if ev.sparse else None, "verbose": 0},
    )
    return res.x, int(res.nit), res.status in (1, 2), res.message


def _solve_sqp(problem, x0, opts, ev):
    constraints = []
    if problem.n_eq:
        constraints.append({"type": "eq", "fun": ev.eq_values, "jac": lambda x: _dense(ev.eq_jac(x))})
    if problem.n_in:
        constraints.append({"type": "ineq", "fun": lambda x: -ev.in_values(x),
                            "jac": lambda x: -_dense(ev.in_jac(x))})
    res = minimize(
        ev.f, x0, jac=ev.grad, method="SLSQP", bounds=Bounds(problem.lower, problem.upper),
        constraints=constraints, options={"maxiter": opts.max_iter, "ftol": 1e-14},
    )
    return res.x, int(res.nit), res.status == 0, res.message


def _active_set_refinement(problem, x, opts, ev):
    """
    SLSQP restarted from an interior-point answer, which leaves active bounds
    and inequalities a barrier distance inside. Equality rows that vanish
    identically at ``x`` are left out; SLSQP rejects them as singular.
    """
    constraints = []
    if problem.n_eq:
        c, J = ev.eq_values(x), _dense(ev.eq_jac(x))
        keep = np.flatnonzero((np.max(np.abs(J), axis=1, initial=0.0) > 1e-12) | (np.abs(c) > opts.tol_feas))
        if keep.size:
            constraints.append({"type": "eq", "fun": lambda z: ev.eq_values(z)[keep],
                                "jac": lambda z: _dense(ev.eq_jac(z))[keep]})
    if problem.n_in:
        constraints.append({"type": "ineq", "fun": lambda z: -ev.in_values(z),
                            "jac": lambda z: -_dense(ev.in_jac(z))})
    res = minimize(
        ev.f, x, jac=ev.grad, method="SLSQP", bounds=Bounds(problem.lower, problem.upper),
        constraints=constraints, options={"maxiter": opts.max_iter, "ftol": 1e-14},
    )
    return res.x, int(res.nit)


def _settle_interior_point(problem, x, opts, ev):
    """Keep the active-set refinement of ``x`` only when it is feasible and closer to stationary."""
    kkt = kkt_residual(problem, x, ev)
    if kkt <= opts.tol_opt:
        return x, 0
    try:
        refined, iterations = _active_set_refinement(problem, x, opts, ev)
        refined = np.clip(refined, problem.lower, problem.upper)
        feasible = max_violation(problem, refined, ev) <= max(opts.tol_feas, max_violation(problem, x, ev))
        improved = feasible and kkt_residual(problem, refined, ev) < kkt
    except (HdloError, ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as err:
        logger.debug("%s: active-set refinement failed: %s", problem.name, err)
        return x, 0
    logger.debug("%s: active-set refinement %s after %d iterations", problem.name,
                 "accepted" if improved else "rejected", iterations)
    return (refined, iterations) if improved else (x, 0)


def _solve_augmented_lagrangian(problem, x0, opts, ev):
    y = np.zeros(problem.n_eq)
    z = np.zeros(problem.n_in)
    rho, x, iterations = 10.0, x0, 0
    previous = np.inf
    bounds = Bounds(problem.lower, problem.upper)
    message = "outer iteration limit"
    for _ in range(50):
        def merit(v):
            f, g = ev.f(v), ev.grad(v)
            if problem.n_eq:
                c, A = ev.eq_values(v), _dense(ev.eq_jac(v))
                f += y @ c + 0.5 * rho * c @ c
                g = g + A.T @ (y + rho * c)
            if problem.n_in:
                d, D = ev.in_values(v), _dense(ev.in_jac(v))
                shifted = np.maximum(0.0, z + rho * d)
                f += (shifted @ shifted - z @ z) / (2.0 * rho)
                g = g + D.T @ shifted
            return f, g

        res = minimize(merit, x, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": max(50, opts.max_iter // 10), "gtol": 0.1 * opts.tol_opt})
        x = res.x
        iterations += int(res.nit)
        violation = max_violation(problem, x, ev)
        if problem.n_eq:
            y = y + rho * ev.eq_values(x)
        if problem.n_in:
            z = np.maximum(0.0, z + rho * ev.in_values(x))
        if violation <= opts.tol_feas:
            message = "feasible augmented-Lagrangian point"
            break
        if iterations >= opts.max_iter:
            message = "iteration limit"
            break
        if violation > 0.25 * previous:
            rho *= 10.0
        previous = violation
    return x, iterations, violation <= opts.tol_feas, message


_BACKENDS = {
    "interior_point": _solve_interior_point,
    "sqp": _solve_sqp,
    "augmented_lagrangian": _solve_augmented_lagrangian,
}


def solve(problem, x0, options=None, extra_residual=None):
    """
    Solve ``problem`` from ``x0`` and classify the result.

    ``extra_residual`` (same evaluator form as constraints) is driven to zero
    together with the equalities during polishing when it can be.
    """
    opts = (options or SolverOptions()).resolved()
    ev = _Evaluator(problem, opts.jacobian, opts.fd_step)
    x0 = np.clip(np.asarray(x0, dtype=float), problem.lower, problem.upper)
    start = time.perf_counter()
    iterations, message = 0, ""
    try:
        x, iterations, solver_ok, message = _BACKENDS[opts.method](problem, x0, opts, ev)
        if opts.method == "interior_point":
            x, extra_iterations = _settle_interior_point(problem, x, opts, ev)
            iterations += extra_iterations
        if opts.polish:
            x = polish(problem, x, extra=extra_residual, tol=min(1e-12, opts.tol_feas), ev=ev,
                       feas_tol=0.1 * opts.tol_feas)
        objective = ev.f(x)
        violation = max_violation(problem, x, ev)
        kkt = kkt_residual(problem, x, ev)
    except (HdloError, ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as err:
        x = ev.last_good if ev.last_good is not None else x0
        wall = time.perf_counter() - start
        logger.warning("%s: evaluator failure during %s solve: %s", problem.name, opts.method, err)
        return x, SolverReport(status="numeric_failure", iterations=iterations, objective=float("nan"),
                               max_violation=float("nan"), kkt_residual=float("nan"), wall_time=wall,
                               method=opts.method, message=f"{type(err).__name__}: {err}",
                               evaluations=dict(ev.counts))
    wall = time.perf_counter() - start

    if violation <= opts.tol_feas and kkt <= opts.tol_opt:
        status = "converged"
    elif iterations >= opts.max_iter:
        status = "max_iter"
    elif violation > opts.tol_feas:
        status = "infeasible"
    else:
        status = "max_iter"
        message = f"{message}; stationarity {kkt:.2e} above tolerance"
    logger.info("%s: %s after %d iterations in %.3fs (f=%.6e, violation=%.2e, kkt=%.2e)",
                problem.name, status, iterations, wall, objective, violation, kkt)
    return x, SolverReport(status=status, iterations=iterations, objective=objective, max_violation=violation,
                           kkt_residual=kkt, wall_time=wall, method=opts.method, message=str(message),
                           evaluations=dict(ev.counts))


@dataclass
class BlockCheck:
    block: str
    max_error: float
    index: tuple
    analytic_time: float
    fd_time: float


@dataclass
class GradientCheckReport:
    step: float
    blocks: dict

    def max_error(self):
        return max((b.max_error for b in self.blocks.values()), default=0.0)

    def passed(self, tol=1e-5):
        return self.max_error() < tol

    def to_frame(self):
        return pd.DataFrame([
            {"block": b.block, "max_rel_error": b.max_error, "row": b.index[0], "col": b.index[1],
             "analytic_s": b.analytic_time, "fd_s": b.fd_time,
             "speedup": b.fd_time / b.analytic_time if b.analytic_time > 0 else np.nan}
            for b in self.blocks.values()
        ])


def _check_block(name, fun, x, step):
    start = time.perf_counter()
    values, jac = fun(x, True)
    analytic_time = time.perf_counter() - start
    A = _dense(jac)
    start = time.perf_counter()
    F = central_difference_jacobian(lambda z: fun(z, False)[0], x, step)
    fd_time = time.perf_counter() - start
    A = A.reshape(F.shape)
    err = np.abs(A - F) / np.maximum(1.0, np.abs(F))
    if err.size == 0:
        return BlockCheck(name, 0.0, (-1, -1), analytic_time, fd_time)
    idx = np.unravel_index(int(np.argmax(err)), err.shape)
    return BlockCheck(name, float(err[idx]), (int(idx[0]), int(idx[1])), analytic_time, fd_time)


def gradient_check(problem, x, step=1e-6):
    """Compare every analytic derivative block with central differences."""
    x = np.asarray(x, dtype=float)
    blocks = {"objective": _check_block("objective", problem.objective, x, step)}
    if problem.n_eq:
        blocks["equality"] = _check_block("equality", problem.equality, x, step)
    if problem.n_in:
        blocks["inequality"] = _check_block("inequality", problem.inequality, x, step)
    for b in blocks.values():
        logger.debug("%s/%s: max rel error %.2e at %s", problem.name, b.block, b.max_error, b.index)
    return GradientCheckReport(step=step, blocks=blocks)


def gradient_sweep(problem, x, steps=(1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12)):
    rows = []
    for step in steps:
        report = gradient_check(problem, x, step)
        for b in report.blocks.values():
            rows.append({"step": step, "block": b.block, "max_rel_error": b.max_error})
    return pd.DataFrame(rows)
