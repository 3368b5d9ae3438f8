"""Real branches of the Lambert W function.

``W0`` (principal) is defined on ``[-1/e, inf)`` with values ``>= -1``;
``W-1`` (lower) on ``[-1/e, 0)`` with values ``<= -1``. Arguments up to
``1e-14`` below ``-1/e`` are treated as rounding noise and clamped onto the
branch point.
"""
from __future__ import annotations

import math
from enum import Enum

__all__ = ["Branch", "LambertDomainError", "lambert_w", "lambert_w0_exp", "BRANCH_POINT"]


class Branch(Enum):
    PRINCIPAL = 0
    LOWER = -1


class LambertDomainError(ValueError):
    pass


# 1/e split into a double and its rounding remainder
_INV_E_HI = 0.36787944117144233
_INV_E_LO = -1.2428753672788363e-17
BRANCH_POINT = -_INV_E_HI
CLAMP = 1e-14

_EPS = 2.220446049250313e-16

# coefficients of W around the branch point in p = +-sqrt(2(ex + 1))
_BRANCH_SERIES = (
    -1.0,
    1.0,
    -1.0 / 3.0,
    11.0 / 72.0,
    -43.0 / 540.0,
    769.0 / 17280.0,
    -221.0 / 8505.0,
    680863.0 / 43545600.0,
    -1963.0 / 204120.0,
    226287557.0 / 37623398400.0,
)


def _branch_series(p: float, terms: int = len(_BRANCH_SERIES)) -> float:
    acc = 0.0
    for c in reversed(_BRANCH_SERIES[:terms]):
        acc = acc * p + c
    return acc


def _halley(w: float, x: float) -> float:
    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= 4.0 * _EPS * max(1.0, abs(w)):
            break
    return w


def _newton_log(w: float, log_abs_x: float) -> float:
    """Solve ``w + log|w| = log|x|``; valid for ``|w|`` away from 1."""
    for _ in range(100):
        g = w + math.log(abs(w)) - log_abs_x
        dw = g / (1.0 + 1.0 / w)
        w -= dw
        if abs(dw) <= 2.0 * _EPS * abs(w):
            break
    return w


def lambert_w(branch: Branch, x: float) -> float:
    """Real Lambert W on the requested branch.

    Raises :class:`LambertDomainError` outside the branch domain rather than
    returning NaN.
    """
    x = float(x)
    if math.isnan(x):
        raise LambertDomainError("Lambert W of NaN")
    branch = Branch(branch)
    # offset from the branch point, kept in extended precision
    dx = (x + _INV_E_HI) + _INV_E_LO
    if dx < 0.0:
        if dx >= -CLAMP:
            return -1.0
        raise LambertDomainError(f"x={x!r} is below the branch point -1/e")
    if branch is Branch.LOWER and x >= 0.0:
        raise LambertDomainError(f"lower branch requires -1/e <= x < 0, got {x!r}")
    if dx == 0.0:
        return -1.0

    if branch is Branch.PRINCIPAL:
        if x == 0.0:
            return 0.0
        if math.isinf(x):
            return math.inf
        if x <= -0.25:
            p = math.sqrt(2.0 * math.e * dx)
            if p < 1e-2:
                return _branch_series(p)
            return _halley(_branch_series(p, 6), x)
        if x <= math.e:
            return _halley(math.log1p(x), x)
        l1 = math.log(x)
        l2 = math.log(l1)
        return _newton_log(l1 - l2 + l2 / l1, l1)

    if x <= -0.25:
        p = -math.sqrt(2.0 * math.e * dx)
        if p > -1e-2:
            return _branch_series(p)
        return _halley(_branch_series(p, 6), x)
    l1 = math.log(-x)
    l2 = math.log(-l1)
    return _newton_log(l1 - l2 + l2 / l1, l1)


def lambert_w0_exp(log_x: float) -> float:
    """``W0(exp(log_x))`` without overflowing for large ``log_x``."""
    if log_x < 700.0:
        return lambert_w(Branch.PRINCIPAL, math.exp(log_x))
    return _newton_log(log_x - math.log(log_x), log_x)
