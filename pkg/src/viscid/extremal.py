"""Extremal controls and trajectories reaching the boundary of the reachable set.

A terminal costate ``p = (lam, eta)`` at time ``T`` fixes the adjoint
``eta(t) = lam + (eta - lam) e^{t-T}`` and the control ``u = eta(t)/|eta(t)|``.
Integrating the dynamics under that control has four closed forms depending on
how ``lam`` and ``eta`` are arranged; :func:`classify` picks one and
:func:`extremal_state` evaluates it.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ModelParams, State, ValidationError, as_vec, ramp

# sine of the angle between lam and eta below which they count as collinear
COLLINEAR_TOL = 1e-9
# |lam| <= ZERO_TOL * |p| counts as lam = 0
ZERO_TOL = 1e-12


class CaseTag(Enum):
    GENERAL = "general"
    OPPOSITE_COLLINEAR = "opposite_collinear"
    SAME_COLLINEAR = "same_collinear"
    ZERO_LAMBDA = "zero_lambda"


class SingularInstantError(ArithmeticError):
    """The extremal control is undefined where the adjoint vanishes."""


@dataclass(frozen=True)
class AdjointTerminal:
    lam: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        lam = as_vec(self.lam, name="lam")
        eta = as_vec(self.eta, lam.size, name="eta")
        if not (np.any(lam) or np.any(eta)):
            raise ValidationError("terminal costate must not be zero", "p")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def from_stacked(cls, p) -> "AdjointTerminal":
        p = as_vec(p, name="p")
        if p.size % 2:
            raise ValidationError(f"stacked costate needs even length, got {p.size}", "p")
        n = p.size // 2
        return cls(p[:n], p[n:])

    @property
    def n(self) -> int:
        return self.lam.size

    @property
    def xi(self) -> np.ndarray:
        return self.eta - self.lam

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.lam, self.eta])

    def normalized(self) -> "AdjointTerminal":
        s = math.hypot(*self.lam, *self.eta)
        # scaling by a positive number keeps the costate valid; skip re-checking
        out = object.__new__(AdjointTerminal)
        object.__setattr__(out, "lam", self.lam / s)
        object.__setattr__(out, "eta", self.eta / s)
        return out


@dataclass(frozen=True)
class SwitchInfo:
    exists: bool
    theta: float | None = None


def wedge_norm(a: np.ndarray, b: np.ndarray) -> float:
    """``sqrt(|a|^2 |b|^2 - (a, b)^2)`` from the 2x2 minors, free of cancellation."""
    m = np.outer(a, b)
    m = m - m.T
    return float(math.sqrt(0.5 * np.sum(m * m)))


def adjoint_eta(t: float, T: float, p: AdjointTerminal) -> np.ndarray:
    return p.lam + p.xi * math.exp(t - T)


def classify(p: AdjointTerminal) -> CaseTag:
    lam_n = np.linalg.norm(p.lam)
    eta_n = np.linalg.norm(p.eta)
    p_n = math.hypot(lam_n, eta_n)
    if lam_n <= ZERO_TOL * p_n:
        return CaseTag.ZERO_LAMBDA
    if eta_n == 0.0:
        return CaseTag.SAME_COLLINEAR
    if wedge_norm(p.lam, p.eta) > COLLINEAR_TOL * lam_n * eta_n:
        return CaseTag.GENERAL
    if np.dot(p.lam, p.eta) < 0.0:
        return CaseTag.OPPOSITE_COLLINEAR
    return CaseTag.SAME_COLLINEAR


def _switch_theta(T: float, lam_n: float, eta_n: float) -> float:
    # T + ln(|lam| / (|lam| + |eta|)); may be <= 0 when no switch happens
    return T - math.log1p(eta_n / lam_n)


def switching_time(T: float, p: AdjointTerminal) -> SwitchInfo:
    """Instant in ``(0, T]`` where the adjoint ``eta`` vanishes, if any."""
    lam_n = float(np.linalg.norm(p.lam))
    eta_n = float(np.linalg.norm(p.eta))
    p_n = math.hypot(lam_n, eta_n)
    if lam_n <= ZERO_TOL * p_n:
        return SwitchInfo(False)
    if eta_n > 0.0:
        collinear = wedge_norm(p.lam, p.eta) <= COLLINEAR_TOL * lam_n * eta_n
        if not collinear or np.dot(p.lam, p.eta) > 0.0:
            return SwitchInfo(False)
    theta = _switch_theta(T, lam_n, eta_n)
    if theta <= 0.0:
        return SwitchInfo(False)
    return SwitchInfo(True, theta)


def extremal_control(t: float, T: float, p: AdjointTerminal) -> np.ndarray:
    """Pointwise extremal control. Only used for checking; the trajectory
    formulas integrate it in closed form."""
    eta = adjoint_eta(t, T, p)
    eta_n = np.linalg.norm(eta)
    if eta_n <= 1e-15 * np.linalg.norm(p.stacked()):
        raise SingularInstantError(f"adjoint vanishes at t={t!r}; control is undefined there")
    return eta / eta_n


def _constant_state(t: float, v0: np.ndarray, d: np.ndarray) -> State:
    decay = math.exp(-t)
    grow = -math.expm1(-t)
    return State(v0 * grow + d * ramp(t), v0 * decay + d * grow)


def _opposite_state(t: float, T: float, p: AdjointTerminal, v0: np.ndarray) -> State:
    lam_n = float(np.linalg.norm(p.lam))
    eta_n = float(np.linalg.norm(p.eta))
    lam_hat = p.lam / lam_n
    theta = _switch_theta(T, lam_n, eta_n)
    e_th = math.exp(theta - t)
    gv = abs(math.exp(-t) - e_th) - abs(1.0 - e_th)
    gr = abs(theta) - abs(t - theta)
    v = v0 * math.exp(-t) + lam_hat * gv
    r = v0 * -math.expm1(-t) - lam_hat * gv + lam_hat * gr
    return State(r, v)


def _plus_cos(a_n: float, a: np.ndarray, eta: np.ndarray, eta_n: float, wedge: float) -> float:
    """``|a| |eta| + (a, eta)`` computed without cancellation."""
    d = float(np.dot(a, eta))
    if d >= 0.0:
        return a_n * eta_n + d
    return wedge * wedge / (a_n * eta_n - d)


def _general_state(t: float, T: float, p: AdjointTerminal, v0: np.ndarray) -> State:
    lam = p.lam
    xi = p.xi
    lam_n = float(np.linalg.norm(lam))
    xi_n = float(np.linalg.norm(xi))
    w = wedge_norm(lam, p.eta)

    x0 = math.exp(-T)
    xt = math.exp(t - T)
    dx = x0 * math.expm1(t)
    eta0 = lam + xi * x0
    etat = lam + xi * xt
    n0 = float(np.linalg.norm(eta0))
    nt = float(np.linalg.norm(etat))
    # |eta(t)| - |eta(0)| via the difference of squares
    dn = dx * float(np.dot(xi, etat + eta0)) / (nt + n0)

    # the 2x2 minors of (xi, eta(s)) equal those of (xi, lam); for (lam, eta(s))
    # they scale with e^{s-T}
    fx0 = _plus_cos(xi_n, xi, eta0, n0, w)
    fxt = _plus_cos(xi_n, xi, etat, nt, w)
    fl0 = _plus_cos(lam_n, lam, eta0, n0, w * x0)
    flt = _plus_cos(lam_n, lam, etat, nt, w * xt)

    if np.dot(xi, eta0) >= 0.0 and np.dot(xi, etat) >= 0.0:
        log_xi = math.log1p((xi_n * dn + xi_n * xi_n * dx) / fx0)
    else:
        log_xi = math.log(fxt / fx0)
    if np.dot(lam, eta0) >= 0.0 and np.dot(lam, etat) >= 0.0:
        log_lam = math.log1p(-(lam_n * dn + float(np.dot(lam, xi)) * dx) / flt)
    else:
        log_lam = math.log(fl0 / flt)

    lam_perp = lam - (float(np.dot(lam, xi)) / (xi_n * xi_n)) * xi
    inv_xt = 1.0 / xt
    dv = inv_xt * (xi * (dn / (xi_n * xi_n)) + lam_perp * (log_xi / xi_n))
    v = v0 * math.exp(-t) + dv
    r = v0 * -math.expm1(-t) - dv + (lam / lam_n) * (t + log_lam) + (xi / xi_n) * log_xi
    return State(r, v)


def extremal_state(
    t: float,
    T: float,
    p: AdjointTerminal,
    params: ModelParams,
    case: CaseTag | None = None,
) -> State:
    """State at time ``t`` along the extremal trajectory ending at ``T``.

    ``case`` forces a particular closed form; leave it ``None`` to use
    :func:`classify`. Forcing is meant for continuity checks near the case
    boundaries and is only meaningful for a costate close to that case.
    """
    if p.n != params.n:
        raise ValidationError(f"costate dimension {p.n} does not match n={params.n}", "p")
    if not 0.0 <= t <= T * (1.0 + 1e-12) + 1e-15:
        raise ValidationError(f"need 0 <= t <= T, got t={t!r}, T={T!r}", "t")
    p = p.normalized()
    if case is None:
        case = classify(p)
    v0 = params.v0_vec
    if case is CaseTag.ZERO_LAMBDA:
        return _constant_state(t, v0, p.eta / np.linalg.norm(p.eta))
    if case is CaseTag.SAME_COLLINEAR:
        return _constant_state(t, v0, p.lam / np.linalg.norm(p.lam))
    if case is CaseTag.OPPOSITE_COLLINEAR:
        return _opposite_state(t, T, p, v0)
    return _general_state(t, T, p, v0)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("VISCID_THREADS", "1")))
    except ValueError:
        return 1


def boundary_sample(T: float, params: ModelParams, dirs) -> list[State]:
    """Endpoints ``s_E(T; T, p)`` for each costate direction in ``dirs``.

    ``dirs`` is an array of shape ``(m, 2n)``. Work is spread over
    ``VISCID_THREADS`` threads when set; the output order follows ``dirs``.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if dirs.shape[1] != 2 * params.n:
        raise ValidationError(f"directions must have 2n={2 * params.n} components", "dirs")
    if T < 0.0:
        raise ValidationError(f"T must be >= 0, got {T!r}", "T")
    if T == 0.0:
        s0 = params.initial_state
        return [s0 for _ in range(len(dirs))]

    def one(d):
        return extremal_state(T, T, AdjointTerminal.from_stacked(d), params)

    threads = _threads()
    if threads > 1 and len(dirs) > 64:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, dirs))
    return [one(d) for d in dirs]


def subspace_directions(k: int, m: int, seed: int = 0) -> np.ndarray:
    """Unit directions on the sphere of a ``k``-dimensional subspace.

    ``k == 1`` gives the two signs, ``k == 2`` ``m`` equally spaced angles,
    and higher ``k`` a scrambled Sobol sequence pushed through the normal
    quantile function and normalized (deterministic for a given seed).
    """
    if k == 1:
        return np.array([[1.0], [-1.0]])
    if k == 2:
        ang = 2.0 * np.pi * np.arange(m) / m
        return np.column_stack([np.cos(ang), np.sin(ang)])
    from scipy.stats import norm as normal
    from scipy.stats import qmc

    u = qmc.Sobol(k, scramble=True, seed=seed).random(m)
    g = normal.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def parse_subspace(label: str, n: int) -> tuple[int, ...]:
    """``"r1v2"`` -> state coordinate indices ``(0, n + 1)``."""
    import re

    parts = re.findall(r"([rv])(\d+)", label)
    if not parts or "".join(a + b for a, b in parts) != label:
        raise ValidationError(f"cannot parse subspace {label!r}", "subspaces")
    coords = []
    for kind, idx in parts:
        i = int(idx)
        if not 1 <= i <= n:
            raise ValidationError(f"coordinate {kind}{i} out of range for n={n}", "subspaces")
        coords.append(i - 1 if kind == "r" else n + i - 1)
    if len(set(coords)) != len(coords):
        raise ValidationError(f"repeated coordinate in {label!r}", "subspaces")
    return tuple(coords)


def projection_boundary(
    T: float, params: ModelParams, coords, m: int = 360, seed: int = 0
) -> np.ndarray:
    """Boundary points of the projection of ``R(T)`` onto ``coords``.

    Costates supported on the chosen coordinates maximize linear functionals
    of that subspace, so their endpoints project onto the boundary of the
    projection. For two coordinates the rows come out in angle order.
    """
    coords = tuple(int(c) for c in coords)
    dim = 2 * params.n
    if not coords or any(not 0 <= c < dim for c in coords) or len(set(coords)) != len(coords):
        raise ValidationError(f"invalid coordinate indices {coords!r} for state dimension {dim}", "coords")
    if m < 3:
        raise ValidationError(f"need at least 3 samples, got {m}", "m")
    sub = subspace_directions(len(coords), m, seed)
    dirs = np.zeros((len(sub), dim))
    dirs[:, coords] = sub
    states = boundary_sample(T, params, dirs)
    return np.array([s.stacked()[list(coords)] for s in states])
