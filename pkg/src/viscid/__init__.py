"""Reachable sets and minimum-time interception for a rocket with linear drag.

The model is ``r' = v``, ``v' = u - v`` with ``|u| <= 1``, starting from the
origin with velocity ``v0`` along the first axis.
"""
from .core import ModelParams, State, ValidationError, propagate_const
from .extremal import AdjointTerminal, CaseTag, boundary_sample, classify, extremal_state, switching_time
from .lambert import Branch, lambert_w
from .reach import Problem, ReachBall, distance, reach_ball
from .solver import (
    EstimatorKind,
    InterceptSolution,
    Status,
    compare_estimators,
    newton_polish,
    solve_intercept,
    tau_simple,
    t_best_position,
    t_best_velocity,
    verify_solution,
)
from .targets import Scenario, Trajectory, lissajous_trajectory, piecewise_linear, rotating_velocity_trajectory

__version__ = "0.1.0"

__all__ = [
    "AdjointTerminal", "Branch", "CaseTag", "EstimatorKind", "InterceptSolution", "ModelParams",
    "Problem", "ReachBall", "Scenario", "State", "Status", "Trajectory", "ValidationError",
    "boundary_sample", "classify", "compare_estimators", "distance", "extremal_state",
    "lambert_w", "lissajous_trajectory", "newton_polish", "piecewise_linear", "propagate_const",
    "reach_ball", "rotating_velocity_trajectory", "solve_intercept", "switching_time",
    "t_best_position", "t_best_velocity", "tau_simple", "verify_solution",
]
