# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""
Command-line front end.

    hdlo <statics|iks|plan|rrt|gradcheck|compare> --scene FILE --goal FILE --out FILE
         [--seed N] [--np K] [--keyframes N] [--no-apertures] [--fd-fallback]

Exit codes: 0 success, 1 solver non-convergence, 2 input error, 3 goal unreachable.
"""

import argparse
import importlib
import logging
import sys

import numpy as np
import pandas as pd

from hdlo_planning import hooks
from hdlo_planning.assembly import end_effector_pose, forward_kinematics
from hdlo_planning.config import configure_logging, get_settings
from hdlo_planning.env_constraints import initial_crossings
from hdlo_planning.exceptions import GoalUnreachable, HdloError, NoConvergence, SceneFileError
from hdlo_planning.nlp import NlpProblem, SolverOptions, gradient_check
from hdlo_planning.planners.birrt import RrtOptions, benchmark_birrt, birrt_plan
from hdlo_planning.planners.iks import build_iks_problem, solve_iks
from hdlo_planning.planners.keyframe import KeyframeBlock, KinematicsMemo
from hdlo_planning.planners.trajectory import resample_dense, warm_start
from hdlo_planning.planners.trajopt import DEFAULT_KEYFRAMES, build_trajopt_problem, solve_trajopt
from hdlo_planning.scene_io import load_goal, load_scene, result_document, to_jsonable, write_result
from hdlo_planning.statics import EquilibriumState, residual, solve_forward_statics

logger = logging.getLogger(__name__)

EXIT = hooks.exit_codes


class CommandFailed(Exception):
    """A command ran but did not produce a converged answer; carries the result already written."""

    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _scene(args):
    if not args.scene:
        raise SceneFileError("--scene is required for this command")
    return load_scene(args.scene, num_points=args.np)


def _goal(args):
    if not args.goal:
        raise SceneFileError("--goal is required for this command")
    return load_goal(args.goal)


def _derivative_blocks(args):
    return "fd" if args.fd_fallback else None


def _solver_options(args):
    return SolverOptions(method=args.method, jacobian="fd" if args.fd_fallback else "analytic")


def _apertures(args, scene):
    return () if args.no_apertures else scene.apertures


def _start(scene, args, q_a=None):
    asm = scene.assembly
    lay = asm.layout
    if q_a is None:
        q_a = scene.start_q_a if scene.start_q_a is not None else np.zeros(lay.n_a)
    q_a = np.asarray(q_a, dtype=float)
    settings = scene.settings()
    return solve_forward_statics(asm, q_a, EquilibriumState.zeros(asm), max_iter=settings.statics_max_iter,
                                 tol=settings.statics_tol, derivative_blocks=_derivative_blocks(args))


def _state_dict(state):
    return {"q": state.q, "u": state.u, "lambda_bar": state.lambda_bar}


def _options(args):
    keys = ("np", "keyframes", "no_apertures", "fd_fallback", "method", "seed")
    return {k: getattr(args, k, None) for k in keys}


def _write(args, command, scene, payload, seed=None):
    doc = result_document(command, scene, _options(args), payload, seed)
    doc["scene_overrides"] = {"num_points": args.np} if args.np else {}
    if args.out:
        write_result(args.out, doc)
        logger.info("wrote %s", args.out)
    return doc


def cmd_statics(args):
    scene = _scene(args)
    asm = scene.assembly
    state = _start(scene, args, args.q_a)
    cache = forward_kinematics(asm, state.q)
    res = residual(asm, state, cache)
    payload = {
        "state": _state_dict(state),
        "path": [_state_dict(state)],
        "metrics": {"residual": res.norm_inf()},
    }
    if asm.end_effector is not None:
        payload["end_effector_pose"] = end_effector_pose(asm, cache)
    print(f"{asm.name}: equilibrium residual {res.norm_inf():.3e}")
    return _write(args, "statics", scene, payload)


def cmd_iks(args):
    scene = _scene(args)
    goal = _goal(args)
    start = _start(scene, args)
    try:
        result = solve_iks(scene.assembly, goal, _apertures(args, scene), start, options=_solver_options(args),
                           goal_tol=scene.settings().goal_tol, derivative_blocks=_derivative_blocks(args))
    except GoalUnreachable as err:
        payload = {"status": "goal_unreachable", **err.state.to_dict(),
                   "path": [_state_dict(start), _state_dict(err.state.state)],
                   "metrics": {"goal_distance": err.distance}}
        _write(args, "iks", scene, payload)
        raise
    payload = {**result.to_dict(), "status": result.report.status,
               "path": [_state_dict(start), _state_dict(result.state)],
               "metrics": {"goal_distance": result.distance, "wall_time": result.report.wall_time,
                           "iterations": result.report.iterations}}
    doc = _write(args, "iks", scene, payload)
    print(f"{scene.assembly.name}: iks {result.report.status}, goal distance {result.distance:.3e}")
    if not result.report.converged:
        raise CommandFailed(EXIT["no_convergence"], f"iks {result.report.status}: {result.report.message}")
    return doc


def cmd_plan(args):
    scene = _scene(args)
    goal = _goal(args)
    asm = scene.assembly
    start = _start(scene, args)
    N = args.keyframes or scene.defaults.get("keyframes") or DEFAULT_KEYFRAMES
    kwargs = dict(options=_solver_options(args), goal_tol=scene.settings().goal_tol,
                  derivative_blocks=_derivative_blocks(args))
    traj = solve_trajopt(asm, goal, _apertures(args, scene), start, N, warm=not args.cold, **kwargs)
    payload = {
        "trajectory": traj.to_dict(),
        "path": [_state_dict(s) for s in traj.states],
        "phases": {"warm_start": traj.iks_report.to_dict() if traj.iks_report else None,
                   "solve": traj.report.to_dict()},
        "metrics": {"path_cost": traj.cost(), "goal_distance": traj.goal_distance,
                    "wall_time": traj.report.wall_time, "iterations": traj.report.iterations},
    }
    if args.contrast and scene.apertures and not args.no_apertures:
        free = solve_trajopt(asm, goal, (), start, N, warm=not args.cold, **kwargs)
        gap = max(float(np.linalg.norm(a.q - b.q)) for a, b in zip(traj.states, free.states))
        payload["unconstrained"] = free.to_dict()
        payload["metrics"]["max_keyframe_gap"] = gap
    if args.dense:
        frame = resample_dense(traj.actuated_path(asm), names=[asm.layout.coordinate_names[i]
                                                               for i in asm.layout.actuated])
        frame.to_csv(args.dense, index=False)
    doc = _write(args, "plan", scene, payload)
    print(f"{asm.name}: plan {traj.report.status}, {N} keyframes, cost {traj.cost():.6e}, "
          f"terminal distance {traj.goal_distance:.3e}")
    if not traj.report.converged or traj.goal_distance > scene.settings().goal_tol:
        raise CommandFailed(EXIT["no_convergence"], f"trajectory optimization {traj.report.status}")
    return doc


def cmd_rrt(args):
    scene = _scene(args)
    goal = _goal(args)
    asm = scene.assembly
    apertures = _apertures(args, scene)
    start = _start(scene, args)
    seed = 0 if args.seed is None else args.seed
    iks = solve_iks(asm, goal, apertures, start, options=_solver_options(args),
                    goal_tol=scene.settings().goal_tol, derivative_blocks=_derivative_blocks(args))
    options = RrtOptions(seed=seed)
    run = birrt_plan(asm, start, iks.state, apertures, options, _derivative_blocks(args))
    payload = {**run.to_dict(), "metrics": {"wall_time": run.wall_time, "iterations": run.iterations,
                                            "path_cost": run.cost()}}
    if args.runs > 1:
        table, summary = benchmark_birrt(asm, start, iks.state, apertures, range(seed, seed + args.runs),
                                         options, _derivative_blocks(args), keyframes=args.keyframes)
        payload["benchmark"] = {"runs": table.to_dict(orient="records"), **summary}
        print(table.to_string(index=False))
    doc = _write(args, "rrt", scene, payload, seed=seed)
    print(f"{asm.name}: rrt {'connected' if run.success else 'failed'} after {run.iterations} iterations, "
          f"trees {run.tree_sizes[0]}/{run.tree_sizes[1]}")
    if not run.success:
        raise CommandFailed(EXIT["goal_unreachable"], f"no connection within {options.max_iter} iterations")
    return doc


def _perturbed(block, z, rng, scale=1e-2):
    z = z + scale * rng.standard_normal(z.size)
    z[block.n_state:] = np.clip(z[block.n_state:], 0.05, 0.95)
    lower, upper = block.bounds()
    return np.clip(z, lower, upper)


def _corrupt(problem):
    objective = problem.objective

    def corrupted(x, derivatives):
        f, g = objective(x, derivatives)
        if g is not None:
            g = np.array(g, dtype=float)
            g[0] += 1.0
        return f, g

    problem.objective = corrupted
    return problem


def cmd_gradcheck(args):
    scene = _scene(args)
    asm = scene.assembly
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    apertures = _apertures(args, scene)
    start = _start(scene, args)
    block = KeyframeBlock(asm, apertures)
    if apertures:
        xd = initial_crossings(forward_kinematics(asm, start.q), apertures)
    else:
        xd = np.zeros(0)
    z0 = block.join(start, xd)

    if args.target == "statics":
        memo = KinematicsMemo(asm)
        lower, upper = block.bounds()
        problem = NlpProblem(n=block.size, objective=lambda x, d: (0.0, np.zeros(block.size) if d else None),
                             lower=lower, upper=upper, equality=lambda x, d: block.equality(x, d, memo),
                             n_eq=block.n_eq, name=f"statics[{asm.name}]")
        x = _perturbed(block, z0, rng)
    elif args.target == "iks":
        problem, _, _ = build_iks_problem(asm, _goal(args), apertures)
        x = _perturbed(block, z0, rng)
    else:
        N = args.keyframes or 3
        problem = build_trajopt_problem(asm, _goal(args), block, z0, N)
        rows = warm_start(z0, z0, N)[1:]
        x = np.concatenate([_perturbed(block, r, rng) for r in rows])
    if args.corrupt:
        problem = _corrupt(problem)
    report = gradient_check(problem, x)
    table = report.to_frame()
    print(table.to_string(index=False))
    doc = _write(args, "gradcheck", scene, {"target": args.target, "blocks": table.to_dict(orient="records"),
                                            "max_error": report.max_error(), "passed": report.passed()},
                 seed=args.seed)
    if not report.passed():
        raise CommandFailed(EXIT["no_convergence"], f"gradient check failed (max rel error {report.max_error():.2e})")
    return doc


def cmd_compare(args):
    if len(args.results) != 2:
        raise SceneFileError("compare takes exactly two result files")
    report = _resolve(hooks.reports["compare"])
    columns, data = report({"result_a": args.results[0], "result_b": args.results[1]})
    table = pd.DataFrame(data, columns=[c["fieldname"] for c in columns])
    print(table.to_string(index=False))
    doc = {"schema_version": 1, "command": "compare", "inputs": list(args.results),
           "metrics": table.to_dict(orient="records")}
    if args.out:
        write_result(args.out, to_jsonable(doc))
    return doc


def build_parser():
    parser = argparse.ArgumentParser(prog="hdlo", description="hDLO kinetostatics and motion planning")
    parser.add_argument("command", choices=sorted(hooks.commands))
    parser.add_argument("results", nargs="*", help="result files (compare)")
    parser.add_argument("--scene")
    parser.add_argument("--goal")
    parser.add_argument("--out")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--np", type=int, help="computation points per deformable link")
    parser.add_argument("--keyframes", type=int)
    parser.add_argument("--no-apertures", action="store_true")
    parser.add_argument("--fd-fallback", action="store_true", help="finite-difference derivative blocks")
    parser.add_argument("--method", choices=("interior_point", "sqp", "augmented_lagrangian"))
    parser.add_argument("--q-a", type=float, nargs="*", help="actuated coordinates (statics)")
    parser.add_argument("--cold", action="store_true", help="start every keyframe at the initial state (plan)")
    parser.add_argument("--contrast", action="store_true", help="also plan without apertures (plan)")
    parser.add_argument("--dense", help="CSV file for the resampled actuator schedule (plan)")
    parser.add_argument("--runs", type=int, default=1, help="seeds to benchmark (rrt)")
    parser.add_argument("--target", choices=("statics", "iks", "trajopt"), default="iks")
    parser.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    parser.add_argument("--log-level")
    return parser


def _resolve(dotted):
    module, _, name = dotted.rpartition(".")
    return getattr(importlib.import_module(module), name)


def _handler(command):
    return _resolve(hooks.commands[command])


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or get_settings().log_level)
    try:
        _handler(args.command)(args)
    except CommandFailed as err:
        logger.error("%s", err)
        return err.code
    except GoalUnreachable as err:
        logger.error("%s", err)
        return EXIT["goal_unreachable"]
    except NoConvergence as err:
        logger.error("%s", err)
        return EXIT["no_convergence"]
    except (HdloError, ValueError) as err:
        logger.error("input error: %s", err)
        return EXIT["input_error"]
    return EXIT["success"]


if __name__ == "__main__":
    sys.exit(main())
