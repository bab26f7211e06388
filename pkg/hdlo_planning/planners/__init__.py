# Copyright (c) 2024, hdlo_planning contributors
# For license information, please see license.txt

from hdlo_planning.planners.birrt import RrtOptions, RrtResult, benchmark_birrt, birrt_plan, birrt_plan_goal
from hdlo_planning.planners.iks import IksResult, build_iks_problem, solve_iks
from hdlo_planning.planners.keyframe import Goal, goal_distance, goal_error
from hdlo_planning.planners.trajectory import (
    PathWeights,
    marker_error,
    path_cost,
    path_cost_gradient,
    resample_dense,
    warm_start,
)
from hdlo_planning.planners.trajopt import Trajectory, build_trajopt_problem, solve_trajopt

__all__ = [
    "Goal", "IksResult", "PathWeights", "RrtOptions", "RrtResult", "Trajectory",
    "benchmark_birrt", "birrt_plan", "birrt_plan_goal", "build_iks_problem", "build_trajopt_problem",
    "goal_distance", "goal_error", "marker_error", "path_cost", "path_cost_gradient",
    "resample_dense", "solve_iks", "solve_trajopt", "warm_start",
]
