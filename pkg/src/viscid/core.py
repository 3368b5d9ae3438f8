"""Vector helpers, model parameters and constant-control propagation.

The model is the unit-normalized isotropic rocket::

    r' = v
    v' = u - v,    |u| <= 1

Physical problems with drag coefficient ``k`` and force bound ``F`` (per unit
mass) map onto it by measuring time in units of ``1/k``, velocity in units of
``F/k`` and length in units of ``F/k**2``. Convert inputs before calling into
the package and convert outputs back; nothing here does it for you.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CONTROL_TOL = 1e-9


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""

    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.field_name = field_name


def as_vec(a, n: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValidationError(f"{name} must have at least one component", name)
    if n is not None and arr.size != n:
        raise ValidationError(f"{name} has dimension {arr.size}, expected {n}", name)
    if not math.isfinite(arr.sum()):
        raise ValidationError(f"{name} has non-finite components", name)
    return arr


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


def inner(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_same_dim(a, b)
    return float(np.dot(a, b))


def norm(a) -> float:
    # hypot rescales, so tiny or huge components neither underflow nor overflow
    return math.hypot(*np.asarray(a, dtype=float).reshape(-1))


def unit(a, fallback=None) -> np.ndarray:
    """Normalize ``a``; zero vectors map to ``fallback`` (default: first axis)."""
    a = np.asarray(a, dtype=float)
    na = np.linalg.norm(a)
    if na == 0.0:
        if fallback is None:
            fallback = np.zeros_like(a)
            fallback[0] = 1.0
        return np.asarray(fallback, dtype=float) / np.linalg.norm(fallback)
    return a / na


def e1(n: int) -> np.ndarray:
    out = np.zeros(n)
    out[0] = 1.0
    return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class State:
    """Position and velocity of the rocket."""

    r: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        r = as_vec(self.r, name="r")
        v = as_vec(self.v, r.size, name="v")
        object.__setattr__(self, "r", _frozen(r))
        object.__setattr__(self, "v", _frozen(v))

    @property
    def n(self) -> int:
        return self.r.size

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.r, self.v])

    @classmethod
    def initial(cls, n: int, v0: float) -> "State":
        return cls(np.zeros(n), v0 * e1(n))


@dataclass(frozen=True)
class ModelParams:
    """Dimension, initial speed, capture radius, target Lipschitz constant and
    the bound on the rate of change of the intercepted component.

    ``vmax`` of ``None`` means "use the bound of the problem being solved"
    (1 for position interception, 2 for velocity reaching).
    """

    n: int = 2
    v0: float = 0.0
    ell: float = 0.0
    lip: float = 0.0
    vmax: float | None = None

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValidationError(f"n must be a positive integer, got {self.n!r}", "n")
        for name in ("v0", "ell", "lip"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise ValidationError(f"{name} must be finite, got {val!r}", name)
        if not 0.0 <= self.v0 < 1.0:
            raise ValidationError(f"v0 must lie in [0, 1), got {self.v0!r}", "v0")
        if self.ell < 0.0:
            raise ValidationError(f"ell must be >= 0, got {self.ell!r}", "ell")
        if self.lip < 0.0:
            raise ValidationError(f"lip must be >= 0, got {self.lip!r}", "lip")
        if self.vmax is not None and not (math.isfinite(self.vmax) and self.vmax > 0.0):
            raise ValidationError(f"vmax must be > 0, got {self.vmax!r}", "vmax")

    @property
    def initial_state(self) -> State:
        return State.initial(self.n, self.v0)

    @property
    def v0_vec(self) -> np.ndarray:
        return self.v0 * e1(self.n)


def propagate_const(state: State, u, dt: float) -> State:
    """Advance ``state`` by ``dt`` under the constant control ``u`` (exact)."""
    u = as_vec(u, state.n, name="u")
    if np.linalg.norm(u) > 1.0 + CONTROL_TOL:
        raise ValidationError(f"control norm {np.linalg.norm(u)!r} exceeds 1", "u")
    if not dt >= 0.0:
        raise ValidationError(f"dt must be >= 0, got {dt!r}", "dt")
    decay = math.exp(-dt)
    grow = -math.expm1(-dt)  # 1 - e^{-dt}
    v = state.v * decay + u * grow
    r = state.r + state.v * grow + u * ramp(dt)
    return State(r, v)


def ramp(t):
    """``t - 1 + e^{-t}``: radius of the position reachable ball at time ``t``."""
    if isinstance(t, float):
        if abs(t) <= 1e-3:
            return t * t * (0.5 - t / 6.0 + t * t / 24.0 - t**3 / 120.0)
        return t + math.expm1(-t)
    t = np.asarray(t, dtype=float)
    small = np.abs(t) <= 1e-3
    ts = np.where(small, t, 0.0)
    series = ts * ts * (0.5 - ts / 6.0 + ts * ts / 24.0 - ts**3 / 120.0)
    out = np.where(small, series, t + np.expm1(-t))
    return out if out.ndim else float(out)
