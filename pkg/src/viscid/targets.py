"""Target trajectories and interception scenarios."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .core import ModelParams, ValidationError, as_vec
from .reach import Problem

log = logging.getLogger(__name__)

LIP_RTOL = 1e-9
DEFAULT_HORIZON = 50.0

# largest speed of the Lissajous example: both cosines reach 1 together at t=0
LISSAJOUS_LIP = math.sqrt(2.0) / 2.0
ROTATING_VELOCITY_LIP = 0.8


class LipschitzError(ValidationError):
    pass


class TrajectoryKind(Enum):
    LISSAJOUS = "lissajous"
    ROTATING_VELOCITY = "rotating-velocity"
    CONSTANT_POINT = "constant"
    PIECEWISE_LINEAR = "piecewise-linear"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class Trajectory:
    """A target path ``t -> h_T(t)`` with its declared Lipschitz constant.

    ``func`` is vectorized: an array of ``m`` times maps to an ``(m, dim)``
    array.
    """

    func: Callable[[np.ndarray], np.ndarray]
    lip: float
    kind: TrajectoryKind
    dim: int
    label: str = ""

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        out = self.func(np.atleast_1d(t_arr))
        return out[0] if t_arr.ndim == 0 else out

    def with_lip(self, lip: float) -> "Trajectory":
        return Trajectory(self.func, float(lip), self.kind, self.dim, self.label)

    def max_speed(self, horizon: float = DEFAULT_HORIZON, grid: int = 200_001, pairs: int = 10_000, seed: int = 0) -> float:
        """Largest difference quotient seen on a dense grid and on random pairs."""
        ts = np.linspace(0.0, horizon, grid)
        hs = self(ts)
        dt = ts[1] - ts[0]
        best = float(np.max(np.linalg.norm(np.diff(hs, axis=0), axis=1)) / dt) if grid > 1 else 0.0
        rng = np.random.default_rng(seed)
        a = rng.uniform(0.0, horizon, pairs)
        b = rng.uniform(0.0, horizon, pairs)
        keep = np.abs(a - b) > 1e-9
        a, b = a[keep], b[keep]
        if a.size:
            q = np.linalg.norm(self(a) - self(b), axis=1) / np.abs(a - b)
            best = max(best, float(q.max()))
        return best

    def check_lipschitz(self, horizon: float = DEFAULT_HORIZON) -> float:
        speed = self.max_speed(horizon)
        if speed > self.lip * (1.0 + LIP_RTOL) + 1e-12:
            raise LipschitzError(
                f"target {self.label or self.kind.value} moves at speed {speed:.6g} "
                f"but declares Lipschitz constant {self.lip:.6g}",
                "lip",
            )
        return speed


def lissajous(t):
    t = np.asarray(t, dtype=float)
    return np.stack([1.0 + np.sin(3.0 * t) / 6.0, math.sqrt(2.0) / 4.0 * np.sin(math.sqrt(2.0) * t)], axis=-1)


def rotating_velocity(t):
    t = np.asarray(t, dtype=float)
    return np.stack([-8.0 / 15.0 * np.sin(1.5 * t), -8.0 / 15.0 * np.cos(1.5 * t)], axis=-1)


def lissajous_trajectory(lip: float = LISSAJOUS_LIP) -> Trajectory:
    return Trajectory(lissajous, lip, TrajectoryKind.LISSAJOUS, 2, "lissajous")


def rotating_velocity_trajectory(lip: float = ROTATING_VELOCITY_LIP) -> Trajectory:
    return Trajectory(rotating_velocity, lip, TrajectoryKind.ROTATING_VELOCITY, 2, "rotating-velocity")


def constant_trajectory(point) -> Trajectory:
    p = as_vec(point, name="target point")

    def f(t):
        return np.broadcast_to(p, (np.shape(t)[0], p.size)).copy()

    label = "constant:" + ",".join(repr(float(x)) for x in p)
    return Trajectory(f, 0.0, TrajectoryKind.CONSTANT_POINT, p.size, label)


def piecewise_linear(times, points, lip: float, kind: TrajectoryKind = TrajectoryKind.PIECEWISE_LINEAR, label: str = "") -> Trajectory:
    """Linear interpolation through ``(times[i], points[i])``, holding the last
    point after the final knot.

    Rejects unsorted times, a first time other than 0, and any segment whose
    slope exceeds ``lip``.
    """
    ts = np.asarray(times, dtype=float).reshape(-1)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(len(ts), -1)
    if ts.size == 0:
        raise ValidationError("trajectory needs at least one sample", "target")
    if pts.shape[0] != ts.size:
        raise ValidationError("times and points differ in length", "target")
    if not (np.all(np.isfinite(ts)) and np.all(np.isfinite(pts))):
        raise ValidationError("trajectory samples must be finite", "target")
    if ts[0] != 0.0:
        raise ValidationError(f"first sample must be at t=0, got {ts[0]!r}", "target")
    if np.any(np.diff(ts) <= 0.0):
        raise ValidationError("sample times must be strictly increasing", "target")
    if lip < 0.0 or not math.isfinite(lip):
        raise ValidationError(f"lip must be a finite value >= 0, got {lip!r}", "lip")
    if ts.size > 1:
        slopes = np.linalg.norm(np.diff(pts, axis=0), axis=1) / np.diff(ts)
        worst = int(np.argmax(slopes))
        if slopes[worst] > lip * (1.0 + LIP_RTOL) + 1e-12:
            raise LipschitzError(
                f"segment {worst} ([{ts[worst]!r}, {ts[worst + 1]!r}]) has slope "
                f"{slopes[worst]:.6g} > lip {lip:.6g}",
                "lip",
            )
    dim = pts.shape[1]
    ts = ts.copy()
    pts = pts.copy()

    def f(t):
        return np.column_stack([np.interp(t, ts, pts[:, j]) for j in range(dim)])

    return Trajectory(f, float(lip), kind, dim, label or kind.value)


def load_sampled(rows, lip: float, label: str = "sampled") -> Trajectory:
    """Trajectory from rows ``(t, h1, ..., hn)``."""
    rows = [tuple(float(x) for x in row) for row in rows]
    if not rows:
        raise ValidationError("trajectory needs at least one sample", "target")
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() < 2:
        raise ValidationError("every row needs a time and the same number of components", "target")
    arr = np.array(rows)
    return piecewise_linear(arr[:, 0], arr[:, 1:], lip, TrajectoryKind.SAMPLED, label)


def read_trajectory_csv(path, lip: float) -> Trajectory:
    """Read a ``t,h1,...,hn`` CSV file (UTF-8, header required)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty trajectory file", "target") from None
        expected = ["t"] + [f"h{i}" for i in range(1, len(header))]
        if len(header) < 2 or header != expected:
            raise ValidationError(f"{path}: header must be t,h1,...,hn, got {','.join(header)}", "target")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields", "target")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}", "target") from None
    return load_sampled(rows, lip, label=f"file:{path}")


def write_trajectory_csv(path, times, points) -> None:
    points = np.asarray(points, dtype=float)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"h{i + 1}" for i in range(points.shape[1])])
        for t, p in zip(times, points):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in p])


@dataclass(frozen=True)
class Scenario:
    problem: Problem
    params: ModelParams
    trajectory: Trajectory

    def __post_init__(self):
        object.__setattr__(self, "problem", Problem(self.problem))
        if self.trajectory.dim != self.params.n:
            raise ValidationError(
                f"target dimension {self.trajectory.dim} does not match n={self.params.n}", "n"
            )
        if self.params.lip != self.trajectory.lip:
            raise ValidationError(
                f"params.lip={self.params.lip!r} differs from the target's declared {self.trajectory.lip!r}",
                "lip",
            )

    @classmethod
    def build(cls, problem, trajectory: Trajectory, v0: float = 0.0, ell: float = 0.0, vmax: float | None = None) -> "Scenario":
        params = ModelParams(n=trajectory.dim, v0=v0, ell=ell, lip=trajectory.lip, vmax=vmax)
        return cls(Problem(problem), params, trajectory)

    @property
    def vmax(self) -> float:
        if self.params.vmax is not None:
            return self.params.vmax
        return 1.0 if self.problem is Problem.POSITION else 2.0

    def validate(self, horizon: float = DEFAULT_HORIZON, strict: bool = True) -> float:
        """Spot-check the declared Lipschitz constant. With ``strict=False`` a
        violation is logged instead of raised."""
        try:
            return self.trajectory.check_lipschitz(horizon)
        except LipschitzError as exc:
            if strict:
                raise
            log.warning("%s; convergence to the minimum time is no longer guaranteed", exc)
            return self.trajectory.max_speed(horizon)
