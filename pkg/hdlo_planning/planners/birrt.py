# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt
"""
Bidirectional RRT on the equilibrium manifold.

Trees grow in actuation space; every candidate is projected onto the
manifold by forward statics seeded with its nearest node, and edges are
checked at interpolated strain configurations.
"""

import logging
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import pandas as pd

from hdlo_planning.assembly import closure_error, forward_kinematics
from hdlo_planning.env_constraints import aperture_feasible
from hdlo_planning.exceptions import HdloError
from hdlo_planning.planners.iks import solve_iks
from hdlo_planning.planners.trajectory import map_path_to_keyframes, path_cost
from hdlo_planning.statics import project_to_manifold

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RrtOptions:
    step: float = 0.1
    goal_bias: float = 0.1
    max_iter: int = 5000
    edge_checks: int = 5
    connect_threshold: float = 1e-3
    closure_tol: float = 5e-3
    max_connect_steps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if not 0 < self.goal_bias < 1:
            raise ValueError(f"goal bias must lie in (0, 1), got {self.goal_bias}")
        if self.max_iter < 1 or self.edge_checks < 0:
            raise ValueError("max_iter must be >= 1 and edge_checks >= 0")


@dataclass
class RRTNode:
    state: object
    q_a: np.ndarray
    parent: Optional[int] = None


class _Tree:
    def __init__(self, root, name):
        self.name = name
        self.nodes = [root]
        self._qa = [root.q_a]

    def __len__(self):
        return len(self.nodes)

    @property
    def root(self):
        return self.nodes[0]

    def add(self, node):
        self.nodes.append(node)
        self._qa.append(node.q_a)
        return len(self.nodes) - 1

    def nearest(self, q_a):
        d = np.linalg.norm(np.asarray(self._qa) - q_a, axis=1)
        return int(np.argmin(d))

    def branch(self, index):
        """States from the root down to ``index``."""
        out = []
        while index is not None:
            node = self.nodes[index]
            out.append(node.state)
            index = node.parent
        return out[::-1]


@dataclass
class RrtResult:
    path: list
    success: bool
    iterations: int
    tree_sizes: tuple
    wall_time: float
    seed: int
    options: RrtOptions

    def cost(self, weights=None, keyframes=None):
        if not self.path:
            return np.nan
        path = map_path_to_keyframes(self.path, keyframes) if keyframes else self.path
        return path_cost(path, weights)

    def to_dict(self):
        return {
            "success": self.success, "iterations": self.iterations,
            "tree_sizes": list(self.tree_sizes), "wall_time": self.wall_time, "seed": self.seed,
            "options": asdict(self.options),
            "path": [{"q": s.q.tolist(), "u": s.u.tolist(), "lambda_bar": s.lambda_bar.tolist()}
                     for s in self.path],
        }


def steer(q_from, q_to, step):
    """Step of length ``step`` from q_from towards q_to; q_to itself when it is closer than that."""
    d = q_to - q_from
    dist = float(np.linalg.norm(d))
    if dist <= step:
        return np.array(q_to, dtype=float)
    return q_from + step * d / dist


class _Planner:
    def __init__(self, asm, apertures, options, derivative_blocks):
        self.asm = asm
        self.apertures = tuple(apertures)
        self.options = options
        self.derivative_blocks = derivative_blocks
        self.actuated = asm.layout.actuated

    def feasible(self, q):
        cache = forward_kinematics(self.asm, q)
        if self.asm.layout.n_c and np.max(np.abs(closure_error(self.asm, cache))) > self.options.closure_tol:
            return False
        return aperture_feasible(self.asm, cache, self.apertures) if self.apertures else True

    def edge_ok(self, q_a, q_b):
        m = self.options.edge_checks
        for i in range(1, m + 1):
            s = i / (m + 1)
            try:
                if not self.feasible((1.0 - s) * q_a + s * q_b):
                    return False
            except HdloError:
                return False
        return True

    def extend(self, tree, q_target):
        """Grow ``tree`` one step towards q_target; returns the new node index or None."""
        parent = tree.nearest(q_target)
        near = tree.nodes[parent]
        q_cand = steer(near.q_a, q_target, self.options.step)
        try:
            state = project_to_manifold(self.asm, q_cand, near.state, derivative_blocks=self.derivative_blocks)
            if self.apertures and not aperture_feasible(
                    self.asm, forward_kinematics(self.asm, state.q), self.apertures):
                return None
        except HdloError as err:
            logger.debug("projection rejected at %s: %s", np.array2string(q_cand, precision=4), err)
            return None
        if not self.edge_ok(near.state.q, state.q):
            return None
        return tree.add(RRTNode(state=state, q_a=state.q[self.actuated].copy(), parent=parent))

    def connect(self, tree, q_target):
        """Greedy extension of ``tree`` until it reaches q_target; the meeting node index or None."""
        for _ in range(self.options.max_connect_steps):
            index = self.extend(tree, q_target)
            if index is None:
                return None
            if np.linalg.norm(tree.nodes[index].q_a - q_target) <= self.options.connect_threshold:
                return index
        return None


def _node(state, actuated):
    return RRTNode(state=state.copy(), q_a=state.q[actuated].copy())


def _join(start_branch, end_branch, actuated, threshold):
    """Concatenate the branches, merging meeting nodes closer than ``threshold`` in actuation space."""
    if start_branch and end_branch:
        gap = np.linalg.norm(start_branch[-1].q[actuated] - end_branch[0].q[actuated])
        # the goal root is never dropped
        if gap <= threshold and len(end_branch) > 1:
            end_branch = end_branch[1:]
        elif gap <= threshold and len(start_branch) > 1:
            start_branch = start_branch[:-1]
    return start_branch + end_branch


def birrt_plan(asm, start, goal_state, apertures=(), options=None, derivative_blocks=None):
    """
    Plan a path of equilibria from ``start`` to ``goal_state``.

    Failure to connect the trees within ``options.max_iter`` iterations is an
    outcome, not an exception: the result has ``success=False`` and an empty
    path. The ``rrt`` command maps it to exit code 3 (goal unreachable).
    """
    options = options or RrtOptions()
    lay = asm.layout
    rng = np.random.default_rng(options.seed)
    planner = _Planner(asm, apertures, options, derivative_blocks)
    lower, upper = lay.lower[lay.actuated], lay.upper[lay.actuated]
    t_start = _Tree(_node(start, lay.actuated), "start")
    t_end = _Tree(_node(goal_state, lay.actuated), "end")
    begin = time.perf_counter()

    def result(path, success, iterations):
        wall = time.perf_counter() - begin
        logger.info("birrt[%s]: %s after %d iterations, trees %d/%d, %d path nodes, %.3fs (seed %d)",
                    asm.name, "connected" if success else "failed", iterations, len(t_start), len(t_end),
                    len(path), wall, options.seed)
        return RrtResult(path=path, success=success, iterations=iterations,
                         tree_sizes=(len(t_start), len(t_end)), wall_time=wall, seed=options.seed,
                         options=options)

    if np.linalg.norm(t_start.root.q_a - t_end.root.q_a) <= options.connect_threshold:
        return result([start.copy()], True, 0)

    grow_from_start = True
    for k in range(1, options.max_iter + 1):
        grow, other = (t_start, t_end) if grow_from_start else (t_end, t_start)
        if rng.random() < options.goal_bias:
            q_rand = other.root.q_a
        else:
            q_rand = rng.uniform(lower, upper)
        new = planner.extend(grow, q_rand)
        if new is not None:
            conn = planner.connect(other, grow.nodes[new].q_a)
            if conn is not None:
                i_start, i_end = (new, conn) if grow_from_start else (conn, new)
                path = _join(t_start.branch(i_start), t_end.branch(i_end)[::-1], lay.actuated,
                             options.connect_threshold)
                return result(path, True, k)
        grow_from_start = not grow_from_start
        if k % 500 == 0:
            logger.debug("birrt[%s]: iteration %d, trees %d/%d", asm.name, k, len(t_start), len(t_end))
    return result([], False, options.max_iter)


def birrt_plan_goal(asm, goal, start, apertures=(), options=None, derivative_blocks=None, iks_options=None):
    """Root the goal tree at an inverse-kinetostatics solution with the apertures active."""
    iks = solve_iks(asm, goal, apertures, start, options=iks_options, derivative_blocks=derivative_blocks)
    return birrt_plan(asm, start, iks.state, apertures, options, derivative_blocks), iks


def benchmark_birrt(asm, start, goal_state, apertures=(), seeds=(0, 1, 2, 3, 4), options=None,
                    derivative_blocks=None, keyframes=None):
    """Repeat the planner over several seeds; per-run table and wall-time statistics."""
    options = options or RrtOptions()
    rows = []
    for seed in seeds:
        run = birrt_plan(asm, start, goal_state, apertures,
                         RrtOptions(**{**asdict(options), "seed": int(seed)}), derivative_blocks)
        rows.append({
            "seed": int(seed), "success": run.success, "wall_time": run.wall_time,
            "iterations": run.iterations, "nodes_start": run.tree_sizes[0], "nodes_end": run.tree_sizes[1],
            "path_nodes": len(run.path), "path_cost": run.cost(keyframes=keyframes),
        })
    table = pd.DataFrame(rows)
    summary = {"mean_time": float(table["wall_time"].mean()),
               "std_time": float(table["wall_time"].std(ddof=0)),
               "success_rate": float(table["success"].mean())}
    return table, summary
