"""Minimum-time interception by fixed-point iteration on lower estimators.

Starting from ``t_0 = 0`` each step maps ``t`` to a time that no admissible
control can beat for any target moving at most ``lip`` fast, so the sequence
increases monotonically towards the minimum interception time. Iteration
stops once the distance from the target to the reachable ball drops below
``ell * (1 + eps)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import ModelParams, ValidationError, as_vec, propagate_const, ramp, unit
from .lambert import Branch, lambert_w, lambert_w0_exp
from .reach import Problem, distance, reach_ball
from .targets import Scenario

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-3
DEFAULT_MAX_ITER = 10**6


class EstimatorKind(Enum):
    SIMPLE = "simple"
    BEST = "best"


class Status(Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    UNREACHABLE = "unreachable"


class NoBracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class TraceStep:
    i: int
    t: float
    dist: float
    step: float


@dataclass
class IterationTrace:
    steps: list[TraceStep] = field(default_factory=list)
    status: Status = Status.MAX_ITERATIONS

    @property
    def t_final(self) -> float:
        return self.steps[-1].t

    @property
    def k(self) -> int:
        return self.steps[-1].i

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.steps])


@dataclass
class InterceptSolution:
    """Result of :func:`solve_intercept`.

    ``control_dir`` is a unit vector; the applied constant control is
    ``control_scale * control_dir``. The scale is below 1 only when the target
    already sits strictly inside the reachable ball at ``t_star``. ``degenerate``
    flags a target at the ball centre, where any direction works.
    """

    t_star: float
    control_dir: np.ndarray | None
    trace: IterationTrace
    problem: Problem
    eps: float
    estimator: EstimatorKind
    control_scale: float = 1.0
    degenerate: bool = False

    @property
    def status(self) -> Status:
        return self.trace.status

    @property
    def control(self) -> np.ndarray | None:
        if self.control_dir is None:
            return None
        return self.control_scale * self.control_dir


@dataclass(frozen=True)
class VerifyReport:
    passed: bool
    miss: float
    threshold: float
    t_star: float
    final_r: np.ndarray
    final_v: np.ndarray


def _require_rest(params: ModelParams) -> None:
    if params.v0 != 0.0:
        raise ValidationError(
            f"the best estimator needs a rocket starting at rest (v0=0), got v0={params.v0!r}", "v0"
        )


def default_vmax(problem: Problem) -> float:
    return 1.0 if Problem(problem) is Problem.POSITION else 2.0


def tau_simple(t: float, h, params: ModelParams, problem: Problem) -> float:
    problem = Problem(problem)
    rho = distance(problem, t, h, params)
    if rho <= params.ell:
        return t
    vmax = params.vmax if params.vmax is not None else default_vmax(problem)
    return t + (rho - params.ell) / (vmax + params.lip)


def t_best_position(t: float, h, params: ModelParams) -> float:
    """Smallest ``theta >= t`` with ``|h| - (theta - 1 + e^-theta) = lip (theta - t) + ell``."""
    _require_rest(params)
    h_n = float(np.linalg.norm(h))
    ell, lip = params.ell, params.lip
    if max(0.0, h_n - ramp(t)) <= ell:
        return t
    a = (1.0 + lip * t - ell + h_n) / (1.0 + lip)
    arg = -math.exp(-a - math.log1p(lip))
    if arg < -math.exp(-1.0) * (1.0 + 1e-12):
        raise ArithmeticError(f"Lambert argument {arg!r} left the principal branch domain")
    theta = a + lambert_w(Branch.PRINCIPAL, max(arg, -math.exp(-1.0)))
    return max(theta, t)


def t_best_velocity(t: float, h, params: ModelParams) -> float:
    """Smallest ``theta >= t`` with ``|h| - (1 - e^-theta) = lip (theta - t) + ell``.

    Returns ``math.inf`` when no such time exists (a resting target faster than
    the rocket can ever go).
    """
    _require_rest(params)
    h_n = float(np.linalg.norm(h))
    ell, lip = params.ell, params.lip
    if max(0.0, h_n + math.expm1(-t)) <= ell:
        return t
    c = (1.0 + ell - h_n) / lip if lip > 0.0 else math.inf
    if math.isinf(c):
        # resting target, or lip so small that the v -> 0 limit is exact in floats
        if 1.0 + ell <= h_n:
            return math.inf
        return max(t, -math.log(1.0 + ell - h_n))
    w = lambert_w0_exp(-t + c - math.log(lip))
    if w >= 1.0:
        # t - c + w cancels badly when c is large; w + ln w = -t + c - ln(lip)
        # turns it into -ln(lip * w)
        theta = -math.log(lip * w)
    else:
        theta = t - c + w
    return max(theta, t)


def is_unreachable(t: float) -> bool:
    return math.isinf(t)


def _estimator(kind: EstimatorKind, scenario: Scenario):
    problem = scenario.problem
    params = scenario.params
    if params.vmax is None:
        params = ModelParams(params.n, params.v0, params.ell, params.lip, scenario.vmax)
    if kind is EstimatorKind.SIMPLE:
        return lambda t, h: tau_simple(t, h, params, problem)
    _require_rest(params)
    if problem is Problem.POSITION:
        return lambda t, h: t_best_position(t, h, params)
    return lambda t, h: t_best_velocity(t, h, params)


def _captured(d: float, ell: float, eps: float) -> bool:
    # d == 0 covers ell == 0, where the strict inequality can never hold
    return d < ell * (1.0 + eps) or d == 0.0


def synthesize_control(scenario: Scenario, t: float):
    """Constant control steering the relevant component to the target at ``t``.

    Returns ``(direction, scale, degenerate)``.
    """
    ball = reach_ball(scenario.problem, t, scenario.params)
    diff = np.asarray(scenario.trajectory(t), dtype=float) - ball.center
    dn = float(np.linalg.norm(diff))
    if dn == 0.0:
        return unit(np.zeros(scenario.params.n)), 0.0, True
    scale = 1.0 if ball.radius <= dn else dn / ball.radius
    return diff / dn, scale, False


def solve_intercept(
    scenario: Scenario,
    estimator: EstimatorKind = EstimatorKind.SIMPLE,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    t0: float = 0.0,
    check_lipschitz: bool = True,
    horizon: float | None = None,
) -> InterceptSolution:
    """Run the fixed-point iteration and synthesize the optimal constant control.

    ``t0`` warm-starts the sequence; any time not exceeding the minimum
    interception time is valid. ``check_lipschitz=False`` downgrades a
    declared-speed violation of the target to a logged warning.
    """
    estimator = EstimatorKind(estimator)
    if not (eps > 0.0 and math.isfinite(eps)):
        raise ValidationError(f"eps must be > 0, got {eps!r}", "eps")
    if max_iter < 0:
        raise ValidationError(f"max_iter must be >= 0, got {max_iter!r}", "max_iter")
    if not t0 >= 0.0:
        raise ValidationError(f"t0 must be >= 0, got {t0!r}", "t0")
    scenario.validate(horizon if horizon is not None else 50.0, strict=check_lipschitz)
    if scenario.params.vmax is not None and scenario.params.vmax < default_vmax(scenario.problem):
        log.warning("vmax=%g is below the rate bound %g; the iteration may overshoot the minimum time",
                    scenario.params.vmax, default_vmax(scenario.problem))

    step_fn = _estimator(estimator, scenario)
    traj = scenario.trajectory
    params = scenario.params
    trace = IterationTrace()
    t, prev = float(t0), float(t0)
    for i in range(max_iter + 1):
        h = traj(t)
        d = float(distance(scenario.problem, t, h, params))
        trace.steps.append(TraceStep(i, t, d, t - prev))
        if _captured(d, params.ell, eps):
            trace.status = Status.CONVERGED
            break
        if i == max_iter:
            trace.status = Status.MAX_ITERATIONS
            break
        nxt = step_fn(t, h)
        if math.isinf(nxt):
            trace.status = Status.UNREACHABLE
            break
        prev, t = t, nxt

    sol = InterceptSolution(trace.t_final, None, trace, scenario.problem, eps, estimator)
    if trace.status is Status.CONVERGED:
        sol.control_dir, sol.control_scale, sol.degenerate = synthesize_control(scenario, sol.t_star)
    return sol


def _gap(scenario: Scenario):
    traj, params, problem = scenario.trajectory, scenario.params, scenario.problem

    def g(t: float) -> float:
        return float(distance(problem, t, traj(t), params)) - params.ell

    return g


def _slope(g, t: float) -> float:
    h = 1e-7 * max(1.0, t)
    if t - h < 0.0:
        return (g(t + h) - g(t)) / h
    return (g(t + h) - g(t - h)) / (2.0 * h)


def newton_polish(t0: float, scenario: Scenario, tol: float = 1e-12, max_iter: int = 100) -> float:
    """Refine ``t0`` to a root of ``dist(t, h_T(t)) = ell``.

    Newton steps with a numerical derivative walk from ``t0`` until the sign of
    the gap flips; the root is then pinned inside that bracket by safeguarded
    Newton with bisection fallback. Raises :class:`NoBracketError` when no sign
    change turns up, which usually means ``t0`` is still far from the root.
    """
    g = _gap(scenario)
    g0 = g(t0)
    if abs(g0) <= tol:
        return t0

    a, ga = t0, g0
    b = gb = None
    for _ in range(60):
        s = _slope(g, a)
        if s == 0.0 or not math.isfinite(s):
            break
        cand = a - ga / s
        if cand < 0.0:
            cand = 0.0
        if cand == a:
            break
        gc = g(cand)
        if abs(gc) <= tol:
            return cand
        if (gc > 0.0) != (ga > 0.0):
            b, gb = cand, gc
            break
        if abs(gc) >= abs(ga):
            break
        a, ga = cand, gc
    if b is None:
        raise NoBracketError(
            f"no sign change of dist - ell near t={t0!r}; run more fixed-point steps first"
        )

    lo, hi = (a, b) if a < b else (b, a)
    glo = ga if a < b else gb
    x = b
    gx = gb
    for _ in range(max_iter):
        s = _slope(g, x)
        nxt = x - gx / s if s else math.nan
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        x, gx = nxt, g(nxt)
        if abs(gx) <= tol:
            return x
        if (gx > 0.0) == (glo > 0.0):
            lo, glo = x, gx
        else:
            hi = x
        if hi - lo <= 4.0 * np.finfo(float).eps * max(1.0, hi):
            return x
    return x


def verify_solution(sol: InterceptSolution, scenario: Scenario, control=None) -> VerifyReport:
    """Fly the constant control from the initial state for ``t_star`` and
    measure the miss in the intercepted component."""
    params = scenario.params
    threshold = params.ell * (1.0 + sol.eps)
    if control is None:
        control = sol.control if sol.control is not None else np.zeros(params.n)
    control = as_vec(control, params.n, name="control")
    end = propagate_const(params.initial_state, control, sol.t_star)
    comp = end.r if scenario.problem is Problem.POSITION else end.v
    miss = float(np.linalg.norm(comp - scenario.trajectory(sol.t_star)))
    return VerifyReport(miss <= threshold, miss, threshold, sol.t_star, end.r, end.v)


def compare_estimators(scenario: Scenario, eps: float = DEFAULT_EPS, max_iter: int = DEFAULT_MAX_ITER, **kw):
    """Run both estimators on one scenario; returns ``(simple, best, deltas)``
    with ``deltas[i] = t_i(best) - t_i(simple)`` over the common indices."""
    _require_rest(scenario.params)
    simple = solve_intercept(scenario, EstimatorKind.SIMPLE, eps, max_iter, **kw)
    best = solve_intercept(scenario, EstimatorKind.BEST, eps, max_iter, **kw)
    m = min(len(simple.trace.steps), len(best.trace.steps))
    deltas = best.trace.times[:m] - simple.trace.times[:m]
    return simple, best, deltas
