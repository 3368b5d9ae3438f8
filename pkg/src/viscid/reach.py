"""Position and velocity projections of the reachable set.

Both projections are balls: in position space centred at ``v0 (1 - e^{-t})``
with radius ``t - 1 + e^{-t}``, in velocity space centred at ``v0 e^{-t}`` with
radius ``1 - e^{-t}`` (the initial velocity points along the first axis).

The distance functions accept a scalar ``t`` with an ``(n,)`` point or arrays
``t`` of shape ``(m,)`` with points of shape ``(m, n)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ModelParams, e1, ramp


class Problem(Enum):
    POSITION = "position"
    VELOCITY = "velocity"


@dataclass(frozen=True)
class ReachBall:
    center: np.ndarray
    radius: float

    def distance(self, h) -> float:
        return max(0.0, float(np.linalg.norm(np.asarray(h, dtype=float) - self.center)) - self.radius)


def reach_ball_position(t: float, params: ModelParams) -> ReachBall:
    return ReachBall(params.v0 * -np.expm1(-t) * e1(params.n), float(ramp(t)))


def reach_ball_velocity(t: float, params: ModelParams) -> ReachBall:
    return ReachBall(params.v0 * np.exp(-t) * e1(params.n), float(-np.expm1(-t)))


def reach_ball(problem: Problem, t: float, params: ModelParams) -> ReachBall:
    if problem is Problem.POSITION:
        return reach_ball_position(t, params)
    return reach_ball_velocity(t, params)


def _ball_distance(center_shift, radius, h):
    h = np.array(h, dtype=float)
    h[..., 0] -= center_shift
    out = np.maximum(0.0, np.linalg.norm(h, axis=-1) - radius)
    return out if out.ndim else float(out)


def dist_position(t, h, params: ModelParams):
    t = np.asarray(t, dtype=float)
    return _ball_distance(params.v0 * -np.expm1(-t), ramp(t), h)


def dist_velocity(t, h, params: ModelParams):
    t = np.asarray(t, dtype=float)
    return _ball_distance(params.v0 * np.exp(-t), -np.expm1(-t), h)


def distance(problem: Problem, t, h, params: ModelParams):
    if problem is Problem.POSITION:
        return dist_position(t, h, params)
    return dist_velocity(t, h, params)
