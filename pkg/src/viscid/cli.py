"""Command-line scenario runner.

Every command writes data (CSV or JSON) rather than pictures. Exit codes:
0 when the computation ran (whatever its status), 1 on I/O errors, 2 when an
input fails validation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .core import ModelParams, ValidationError, as_vec, propagate_const
from .extremal import parse_subspace, projection_boundary
from .reach import Problem
from .solver import (
    DEFAULT_EPS,
    DEFAULT_MAX_ITER,
    EstimatorKind,
    InterceptSolution,
    IterationTrace,
    NoBracketError,
    Status,
    compare_estimators,
    newton_polish,
    solve_intercept,
    verify_solution,
)
from .targets import (
    Scenario,
    Trajectory,
    constant_trajectory,
    lissajous_trajectory,
    read_trajectory_csv,
    rotating_velocity_trajectory,
)

log = logging.getLogger("viscid")

SCHEMA_VERSION = 1
SCENARIO_KEYS = (
    "problem", "n", "v0", "initial_velocity", "ell", "lip", "vmax", "eps",
    "estimator", "max_iter", "target", "lip_check", "horizon",
)


@dataclass
class RunConfig:
    command: str
    problem: str = "position"
    n: int | None = None
    v0: float = 0.0
    initial_velocity: list[float] | None = None
    ell: float = 0.1
    lip: float | None = None
    vmax: float | None = None
    eps: float = DEFAULT_EPS
    estimator: str = "simple"
    max_iter: int = DEFAULT_MAX_ITER
    target: str = "lissajous"
    lip_check: bool = True
    horizon: float = 50.0
    times: list[float] = field(default_factory=lambda: [0.5, 1.0, 1.5, 2.0])
    subspaces: list[str] = field(default_factory=lambda: ["r1r2", "r1v1", "v1v2", "r1v2"])
    samples: int = 360
    seed: int = 0
    polish: bool = False
    path_dt: float = 0.01
    solution: str | None = None
    out: str | None = None
    format: str = "json"

    def scenario_dict(self) -> dict:
        return {k: getattr(self, k) for k in SCENARIO_KEYS}


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _dump_json(doc: dict) -> str:
    return json.dumps(_jsonable(doc), indent=1, allow_nan=False) + "\n"


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) if not isinstance(x, str) else x for x in row])
    return buf.getvalue()


def _sibling(out: str | None, suffix: str) -> str | None:
    if out is None or out == "-":
        return None
    p = Path(out)
    return str(p.with_name(p.stem + suffix))


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse {text!r} as comma-separated numbers", name) from None


# frame alignment ------------------------------------------------------------

def frame_alignment(v_world) -> tuple[float, np.ndarray]:
    """Speed and orthogonal map taking the world frame to the solver frame,
    where the initial velocity points along the first axis."""
    v = as_vec(v_world, name="initial_velocity")
    speed = float(np.linalg.norm(v))
    n = v.size
    q = np.eye(n)
    if speed > 0.0:
        w = v / speed
        w[0] -= 1.0
        ww = float(w @ w)
        if ww > 1e-30:
            q = np.eye(n) - 2.0 * np.outer(w, w) / ww
    return speed, q


def _rotated(traj: Trajectory, q: np.ndarray) -> Trajectory:
    return Trajectory(lambda t: traj.func(t) @ q.T, traj.lip, traj.kind, traj.dim, traj.label)


# scenario construction ------------------------------------------------------

def build_target(spec: str, lip: float | None) -> Trajectory:
    if spec == "lissajous":
        traj = lissajous_trajectory()
    elif spec == "rotating-velocity":
        traj = rotating_velocity_trajectory()
    elif spec.startswith("constant:"):
        traj = constant_trajectory(_floats(spec[len("constant:"):], "target"))
    elif spec.startswith("file:"):
        if lip is None:
            raise ValidationError("file targets need an explicit --lip", "lip")
        return read_trajectory_csv(spec[len("file:"):], lip)
    else:
        raise ValidationError(
            f"unknown target {spec!r} (lissajous, rotating-velocity, constant:<vec>, file:<path>)", "target"
        )
    return traj if lip is None else traj.with_lip(lip)


def build_scenario(cfg: RunConfig) -> tuple[Scenario, np.ndarray]:
    """Scenario in the solver frame plus the world-to-solver map."""
    traj = build_target(cfg.target, cfg.lip)
    n = cfg.n if cfg.n is not None else traj.dim
    if n != traj.dim:
        raise ValidationError(f"--n {n} does not match the target dimension {traj.dim}", "n")
    v0, q = cfg.v0, np.eye(n)
    if cfg.initial_velocity is not None:
        v0, q = frame_alignment(as_vec(cfg.initial_velocity, n, name="initial_velocity"))
        traj = _rotated(traj, q)
    params = ModelParams(n=n, v0=v0, ell=cfg.ell, lip=traj.lip, vmax=cfg.vmax)
    return Scenario(Problem(cfg.problem), params, traj), q


def _check_common(cfg: RunConfig) -> None:
    if cfg.problem not in ("position", "velocity"):
        raise ValidationError(f"problem must be position or velocity, got {cfg.problem!r}", "problem")
    if cfg.estimator not in ("simple", "best"):
        raise ValidationError(f"estimator must be simple or best, got {cfg.estimator!r}", "estimator")
    if not (isinstance(cfg.eps, (int, float)) and cfg.eps > 0 and math.isfinite(cfg.eps)):
        raise ValidationError(f"eps must be > 0, got {cfg.eps!r}", "eps")
    if not isinstance(cfg.max_iter, int) or cfg.max_iter < 0:
        raise ValidationError(f"max_iter must be a non-negative integer, got {cfg.max_iter!r}", "max_iter")
    if cfg.format not in ("csv", "json"):
        raise ValidationError(f"format must be csv or json, got {cfg.format!r}", "format")
    if not cfg.horizon > 0:
        raise ValidationError(f"horizon must be > 0, got {cfg.horizon!r}", "horizon")


# serialization helpers ------------------------------------------------------

def trace_rows(trace: IterationTrace):
    return [{"i": s.i, "t": s.t, "dist": s.dist, "step": s.step} for s in trace.steps]


def _path(scenario: Scenario, sol: InterceptSolution, q: np.ndarray, dt: float):
    if sol.control is None:
        return []
    m = max(1, int(math.ceil(sol.t_star / dt))) if sol.t_star > 0 else 0
    ts = np.linspace(0.0, sol.t_star, m + 1)
    s0 = scenario.params.initial_state
    rows = []
    for t in ts:
        s = propagate_const(s0, sol.control, float(t))
        rows.append({
            "t": float(t),
            "r": q.T @ s.r,
            "v": q.T @ s.v,
            "target": q.T @ np.asarray(scenario.trajectory(float(t))),
        })
    return rows


def solution_doc(cfg: RunConfig, scenario: Scenario, q: np.ndarray, sol: InterceptSolution, t_polished, polish_error):
    report = verify_solution(sol, scenario) if sol.control is not None else None
    return {
        "schema": "viscid/intercept",
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.scenario_dict(),
        "status": sol.status.value,
        "iterations": sol.trace.k,
        "t_star": sol.t_star,
        "t_polished": t_polished,
        "polish_error": polish_error,
        "final_dist": sol.trace.steps[-1].dist,
        "control_dir": None if sol.control_dir is None else q.T @ sol.control_dir,
        "control_scale": sol.control_scale,
        "degenerate": sol.degenerate,
        "verification": None if report is None else {
            "passed": report.passed, "miss": report.miss, "threshold": report.threshold,
        },
    }


# commands -------------------------------------------------------------------

def cmd_reach_boundary(cfg: RunConfig) -> int:
    n = cfg.n if cfg.n is not None else 2
    params = ModelParams(n=n, v0=cfg.v0)
    if cfg.samples < 3:
        raise ValidationError(f"samples must be >= 3, got {cfg.samples}", "samples")
    if not cfg.times or any(not (t >= 0 and math.isfinite(t)) for t in cfg.times):
        raise ValidationError("times must be non-negative finite numbers", "times")
    if cfg.format not in ("csv", "json"):
        raise ValidationError(f"format must be csv or json, got {cfg.format!r}", "format")
    subspaces = [(label, parse_subspace(label, n)) for label in cfg.subspaces]
    records = []
    for t in cfg.times:
        for label, coords in subspaces:
            pts = projection_boundary(t, params, coords, cfg.samples, cfg.seed)
            if t == 0.0:
                pts = pts[:1]
            for j, pt in enumerate(pts):
                records.append({"t": t, "subspace": label, "index": j, "point": pt})
    if cfg.format == "json":
        _write_text(cfg.out, _dump_json({
            "schema": "viscid/reach-boundary",
            "schema_version": SCHEMA_VERSION,
            "n": n, "v0": cfg.v0, "samples": cfg.samples, "seed": cfg.seed,
            "records": records,
        }))
    else:
        width = max(len(c) for _, c in subspaces)
        header = ["t", "subspace", "index"] + [f"x{k + 1}" for k in range(width)]
        rows = [
            [rec["t"], rec["subspace"], rec["index"], *rec["point"], *([""] * (width - len(rec["point"])))]
            for rec in records
        ]
        _write_text(cfg.out, _csv_text(header, rows))
    return 0


def cmd_intercept(cfg: RunConfig) -> int:
    _check_common(cfg)
    scenario, q = build_scenario(cfg)
    sol = solve_intercept(
        scenario, EstimatorKind(cfg.estimator), cfg.eps, cfg.max_iter,
        check_lipschitz=cfg.lip_check, horizon=cfg.horizon,
    )
    t_polished = polish_error = None
    if cfg.polish and sol.status is Status.CONVERGED and scenario.params.ell > 0:
        try:
            t_polished = newton_polish(sol.t_star, scenario, 1e-12)
        except NoBracketError as exc:
            polish_error = str(exc)
    doc = solution_doc(cfg, scenario, q, sol, t_polished, polish_error)
    trace = trace_rows(sol.trace)
    path = _path(scenario, sol, q, cfg.path_dt)
    if cfg.format == "json":
        doc["trace"] = trace
        doc["path"] = path
        _write_text(cfg.out, _dump_json(doc))
    else:
        _write_text(cfg.out, _csv_text(["i", "t", "dist", "step"], [list(r.values()) for r in trace]))
        side = _sibling(cfg.out, ".solution.json")
        if side:
            _write_text(side, _dump_json(doc))
        side = _sibling(cfg.out, ".path.csv")
        if side:
            n = scenario.params.n
            header = ["t"] + [f"r{k + 1}" for k in range(n)] + [f"v{k + 1}" for k in range(n)] + [f"h{k + 1}" for k in range(n)]
            _write_text(side, _csv_text(header, [[p["t"], *p["r"], *p["v"], *p["target"]] for p in path]))
    print(f"status={sol.status.value} t={sol.t_star!r} iterations={sol.trace.k}", file=sys.stderr)
    return 0


def cmd_compare_estimators(cfg: RunConfig) -> int:
    _check_common(cfg)
    if cfg.v0 != 0.0 or cfg.initial_velocity is not None and any(cfg.initial_velocity):
        raise ValidationError(
            "comparing estimators needs v0 = 0: the best estimator is only known in closed form "
            "for a rocket starting at rest", "v0")
    scenario, _ = build_scenario(cfg)
    simple, best, deltas = compare_estimators(
        scenario, cfg.eps, cfg.max_iter, check_lipschitz=cfg.lip_check, horizon=cfg.horizon)
    rows = []
    for i in range(max(len(simple.trace.steps), len(best.trace.steps))):
        a = simple.trace.steps[i] if i < len(simple.trace.steps) else None
        b = best.trace.steps[i] if i < len(best.trace.steps) else None
        rows.append({
            "i": i,
            "t_simple": a and a.t, "dist_simple": a and a.dist, "step_simple": a and a.step,
            "t_best": b and b.t, "dist_best": b and b.dist, "step_best": b and b.step,
            "delta": (b.t - a.t) if a and b else None,
            "step_delta": (b.step - a.step) if a and b else None,
        })
    if cfg.format == "json":
        _write_text(cfg.out, _dump_json({
            "schema": "viscid/compare-estimators",
            "schema_version": SCHEMA_VERSION,
            "scenario": cfg.scenario_dict(),
            "simple": {"status": simple.status.value, "iterations": simple.trace.k,
                       "t_star": simple.t_star, "trace": trace_rows(simple.trace)},
            "best": {"status": best.status.value, "iterations": best.trace.k,
                     "t_star": best.t_star, "trace": trace_rows(best.trace)},
            "rows": rows,
        }))
    else:
        header = list(rows[0].keys())
        _write_text(cfg.out, _csv_text(header, [list(r.values()) for r in rows]))
    print(f"simple: {simple.status.value} in {simple.trace.k}; best: {best.status.value} in {best.trace.k}",
          file=sys.stderr)
    return 0


def load_solution(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError:
        raise
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})", "solution") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: expected a JSON object", "solution")
    for key in ("scenario", "t_star", "control_dir", "control_scale"):
        if key not in doc:
            raise ValidationError(f"{path}: missing field {key!r}", "solution")
    if not isinstance(doc["scenario"], dict):
        raise ValidationError(f"{path}: scenario must be an object", "solution")
    t = doc["t_star"]
    if not isinstance(t, (int, float)) or isinstance(t, bool) or not (t >= 0 and math.isfinite(t)):
        raise ValidationError(f"{path}: t_star must be a finite number >= 0", "solution")
    if doc["control_dir"] is None:
        raise ValidationError(f"{path}: solution has no control (status {doc.get('status')!r})", "solution")
    return doc


def cmd_verify(cfg: RunConfig, overrides: dict) -> int:
    if cfg.solution is None:
        raise ValidationError("verify needs --solution", "solution")
    doc = load_solution(cfg.solution)
    base = RunConfig(command="verify", **_scenario_fields(doc["scenario"]))
    for k, v in overrides.items():
        setattr(base, k, v)
    base.format = cfg.format
    _check_common(base)
    scenario, q = build_scenario(base)
    control_world = as_vec(doc["control_dir"], scenario.params.n, name="control_dir")
    scale = doc["control_scale"]
    if not isinstance(scale, (int, float)) or not 0.0 <= scale <= 1.0:
        raise ValidationError("control_scale must lie in [0, 1]", "solution")
    sol = InterceptSolution(float(doc["t_star"]), q @ control_world, IterationTrace(), scenario.problem,
                            base.eps, EstimatorKind(base.estimator), float(scale))
    report = verify_solution(sol, scenario)
    out = {
        "schema": "viscid/verify",
        "schema_version": SCHEMA_VERSION,
        "solution": str(cfg.solution),
        "t_star": report.t_star,
        "miss": report.miss,
        "threshold": report.threshold,
        "passed": report.passed,
    }
    if cfg.format == "json":
        _write_text(cfg.out, _dump_json(out))
    else:
        keys = ["t_star", "miss", "threshold", "passed"]
        _write_text(cfg.out, _csv_text(keys, [[out[k] for k in keys]]))
    print(f"{'PASS' if report.passed else 'FAIL'} miss={report.miss!r} threshold={report.threshold!r}",
          file=sys.stderr)
    return 0


# argument handling ----------------------------------------------------------

def _scenario_fields(d: dict) -> dict:
    names = {f.name for f in fields(RunConfig)}
    unknown = set(d) - names
    if unknown:
        raise ValidationError(f"unknown scenario field(s): {', '.join(sorted(unknown))}", sorted(unknown)[0])
    return {k: v for k, v in d.items() if k != "command"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viscid", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--format", choices=["csv", "json"])
        sp.add_argument("--n", type=int)
        sp.add_argument("--v0", type=float)
        if not scenario:
            return
        sp.add_argument("--scenario", help="JSON scenario file; flags override its fields")
        sp.add_argument("--problem", choices=["position", "velocity"])
        sp.add_argument("--initial-velocity", dest="initial_velocity",
                        help="world-frame initial velocity, e.g. 0.3,0.4 (replaces --v0)")
        sp.add_argument("--ell", type=float)
        sp.add_argument("--lip", type=float)
        sp.add_argument("--vmax", type=float)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--estimator", choices=["simple", "best"])
        sp.add_argument("--max-iter", dest="max_iter", type=int)
        sp.add_argument("--target", help="lissajous | rotating-velocity | constant:<vec> | file:<path>")
        sp.add_argument("--horizon", type=float, help="time span for the target speed check")
        sp.add_argument("--no-lip-check", dest="lip_check", action="store_const", const=False,
                        help="warn instead of failing when the target moves faster than --lip")

    sp = sub.add_parser("reach-boundary", help="sample boundaries of reachable-set projections")
    common(sp, scenario=False)
    sp.add_argument("--times")
    sp.add_argument("--subspaces")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int)

    sp = sub.add_parser("intercept", help="minimum-time interception of a moving target")
    common(sp)
    sp.add_argument("--polish", action="store_const", const=True, help="refine the time with Newton's method")
    sp.add_argument("--path-dt", dest="path_dt", type=float)

    sp = sub.add_parser("compare-estimators", help="simple vs best estimator traces (v0 = 0)")
    common(sp)

    sp = sub.add_parser("verify", help="re-fly a solution file and report the miss distance")
    common(sp)
    sp.add_argument("--solution", required=True)
    return p


def config_from_args(ns: argparse.Namespace) -> tuple[RunConfig, dict]:
    values: dict = {}
    scenario_file = getattr(ns, "scenario", None)
    if scenario_file:
        try:
            data = json.loads(Path(scenario_file).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{scenario_file}: not valid JSON ({exc})", "scenario") from None
        if not isinstance(data, dict):
            raise ValidationError(f"{scenario_file}: expected a JSON object", "scenario")
        values.update(_scenario_fields(data.get("scenario", data) if "schema" in data else data))
    overrides = {}
    for key, val in vars(ns).items():
        if key in ("command", "scenario") or val is None:
            continue
        if key == "times":
            val = _floats(val, "times")
        elif key == "subspaces":
            val = [s.strip() for s in val.split(",") if s.strip()]
        elif key == "initial_velocity":
            val = _floats(val, "initial_velocity")
        overrides[key] = val
    values.update(overrides)
    cfg = RunConfig(command=ns.command, **values)
    if cfg.out and cfg.format == "json" and "format" not in values and cfg.out.endswith(".csv"):
        cfg.format = "csv"
    return cfg, overrides


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("warning: %(message)s"))
    log.addHandler(handler)
    log.propagate = False
    try:
        return _dispatch(ns)
    finally:
        log.removeHandler(handler)
        log.propagate = True


def _dispatch(ns: argparse.Namespace) -> int:
    try:
        cfg, overrides = config_from_args(ns)
        if cfg.command == "reach-boundary":
            return cmd_reach_boundary(cfg)
        if cfg.command == "intercept":
            return cmd_intercept(cfg)
        if cfg.command == "compare-estimators":
            return cmd_compare_estimators(cfg)
        return cmd_verify(cfg, {k: v for k, v in overrides.items() if k in SCENARIO_KEYS})
    except ValidationError as exc:
        where = f" [{exc.field_name}]" if exc.field_name else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return 2
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
