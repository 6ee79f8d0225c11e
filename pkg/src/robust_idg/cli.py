"""Command-line runner.

Subcommands ``ilqg``, ``idg``, ``sweep`` and ``oracle-check``. Exit codes:
0 on success, 1 on solver failure (a ``*_failure.json`` diagnostic is
written), 2 on configuration or usage errors. Log verbosity is read from
the ``ROBUST_IDG_LOG`` environment variable (``DEBUG``, ``INFO``, ...).

Trajectory CSV columns, in order: ``t``, the state (``x, y, theta, xdot,
ydot, thetadot`` for the platform, ``x0..`` otherwise), ``u0..``,
``v0..``, ``stage_cost``. The last row (``t = T``) has empty input cells
and the terminal cost. Floats are written with ``repr`` so they round-trip
exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import checks, idg, ilqg
from .config import load_config
from .dynamics import MecanumPlatform, wrap_angle
from .exceptions import ConcavityViolated, ConfigError, DivergedRollout, FailureAtStep, HorizonMismatch, NoProgress
from .robustness import FrozenPolicy, sweep, terminal_distance

logger = logging.getLogger("robust_idg")

LOG_ENV = "ROBUST_IDG_LOG"
PLATFORM_STATE = ("x", "y", "theta", "xdot", "ydot", "thetadot")
CURVE_COLUMNS = ("gamma", "adversary_cost", "degradation", "iterations", "annotation")


class SolverFailure(Exception):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _num(x):
    return repr(float(x))


def trajectory_rows(model, traj):
    """Header and rows of the trajectory CSV."""
    n, m, p = traj.xs.shape[1], traj.us.shape[1], traj.vs.shape[1]
    platform = isinstance(model, MecanumPlatform)
    state = list(PLATFORM_STATE) if platform else [f"x{i}" for i in range(n)]
    header = ["t", *state, *(f"u{i}" for i in range(m)), *(f"v{i}" for i in range(p)), "stage_cost"]
    rows = []
    for t in range(traj.horizon + 1):
        x = traj.xs[t].copy()
        if platform:
            x[2] = wrap_angle(x[2])
        if t < traj.horizon:
            inputs = [_num(a) for a in (*traj.us[t], *traj.vs[t])]
        else:
            inputs = [""] * (m + p)
        rows.append([str(t), *(_num(a) for a in x), *inputs, _num(traj.stage_costs[t])])
    return header, rows


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _outdir(cfg):
    out = Path(cfg.experiment.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _final_distance(cfg, traj):
    return terminal_distance(cfg.experiment.goal)(traj.xs)


def _solve_nominal(cfg, model):
    cost = cfg.build_cost().nominal
    options = cfg.solver.options(cfg.experiment.seed)
    us0 = cfg.initial_controls(model)
    try:
        return ilqg.solve(model, cost, np.asarray(cfg.experiment.x0, dtype=float), us0, options)
    except NoProgress as exc:
        raise SolverFailure(str(exc), exc.result[2] if exc.result else None) from exc
    except DivergedRollout as exc:
        raise SolverFailure(f"initial rollout diverged: {exc}") from exc


def _solve_report(cfg, command, traj, report, seconds, **extra):
    return {
        "command": command,
        "config": cfg.to_dict(),
        "final_state": traj.xs[-1].tolist(),
        "final_distance": _final_distance(cfg, traj),
        "cost": traj.cost,
        "seconds": seconds,
        "report": report.to_dict(),
        **extra,
    }


def cmd_ilqg(cfg):
    model = cfg.build_model()
    start = time.perf_counter()
    traj, _, report = _solve_nominal(cfg, model)
    out = _outdir(cfg)
    write_csv(out / "ilqg_trajectory.csv", *trajectory_rows(model, traj))
    summary = _solve_report(cfg, "ilqg", traj, report, time.perf_counter() - start)
    write_json(out / "ilqg_report.json", summary)
    return summary


def cmd_idg(cfg):
    model = cfg.build_model()
    cost = cfg.build_cost()
    options = cfg.solver.options(cfg.experiment.seed)
    start = time.perf_counter()
    try:
        traj, _, report = idg.idg_solve(model, cost, np.asarray(cfg.experiment.x0, dtype=float), cfg.initial_controls(model), options=options)
    except NoProgress as exc:
        raise SolverFailure(str(exc), exc.result[2] if exc.result else None) from exc
    except DivergedRollout as exc:
        raise SolverFailure(f"initial rollout diverged: {exc}") from exc
    out = _outdir(cfg)
    write_csv(out / "idg_trajectory.csv", *trajectory_rows(model, traj))
    summary = _solve_report(cfg, "idg", traj, report, time.perf_counter() - start, gamma=cfg.experiment.gamma)
    write_json(out / "idg_report.json", summary)
    return summary


def cmd_sweep(cfg, workers=None, restarts=None):
    model = cfg.build_model()
    start = time.perf_counter()
    traj, gains, report = _solve_nominal(cfg, model)
    policy = FrozenPolicy.from_solve(traj, gains)
    exp = cfg.experiment
    curve = sweep(
        model,
        policy,
        cfg.build_cost(),
        exp.gamma_grid,
        np.asarray(exp.x0, dtype=float),
        cfg.solver.options(exp.seed),
        restarts=exp.restarts if restarts is None else restarts,
        seed=exp.seed,
        threshold=exp.threshold,
        metric=terminal_distance(exp.goal),
        workers=exp.workers if workers is None else workers,
    )
    out = _outdir(cfg)
    rows = [[_num(p.gamma), _num(p.adversary_cost), _num(p.degradation), str(p.iterations), p.annotation or ""] for p in curve.points]
    write_csv(out / "sweep_curve.csv", list(CURVE_COLUMNS), rows)
    summary = {
        "command": "sweep",
        "config": cfg.to_dict(),
        "nominal_final_distance": _final_distance(cfg, traj),
        "nominal_report": report.to_dict(),
        "seconds": time.perf_counter() - start,
        "curve": curve.to_dict(),
    }
    write_json(out / "sweep_curve.json", summary)
    return summary


def cmd_oracle_check(seed, out=None):
    results = [r.to_dict() for r in checks.run_suite(seed)]
    summary = {"command": "oracle-check", "seed": seed, "results": results, "all_pass": all(r["status"] == "pass" for r in results)}
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_json(Path(out) / "oracle_check.json", summary)
    return summary


def parse_grid(text):
    """``"10,5,3"`` or ``"log:1e-2:1e2:5"`` (num log-spaced points)."""
    try:
        if text.startswith("log:"):
            lo, hi, num = text[4:].split(":")
            return [float(g) for g in np.logspace(np.log10(float(lo)), np.log10(float(hi)), int(num))]
        return [float(g) for g in text.split(",") if g.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --gamma-grid {text!r}: {exc}") from exc


def build_parser():
    parser = argparse.ArgumentParser(prog="robust-idg", description="Iterative dynamic games and robustness sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML or JSON run configuration")
        p.add_argument("--seed", type=int, help="override experiment.seed")
        p.add_argument("--out", help="override experiment.output_dir")
        p.add_argument("--horizon", type=int, help="override solver.horizon")
        p.add_argument("--max-iters", type=int, help="override solver.max_iters")
        p.add_argument("--chi", type=float, help="override solver.chi")

    common(sub.add_parser("ilqg", help="nominal single-player solve"))
    p_idg = sub.add_parser("idg", help="two-player minimax solve")
    common(p_idg)
    p_idg.add_argument("--gamma", type=float, help="override experiment.gamma")
    p_sweep = sub.add_parser("sweep", help="robustness curve of the nominal policy")
    common(p_sweep)
    p_sweep.add_argument("--gamma-grid", help="comma-separated gammas or log:LO:HI:NUM, overrides experiment.gamma_grid")
    p_sweep.add_argument("--threshold", type=float, help="override experiment.threshold")
    p_sweep.add_argument("--workers", type=int, help="parallel processes (one gamma per task)")
    p_sweep.add_argument("--restarts", type=int, help="adversary starts per gamma")
    p_oc = sub.add_parser("oracle-check", help="compare solvers with closed-form LQ oracles")
    p_oc.add_argument("--seed", type=int, default=0)
    p_oc.add_argument("--out", help="also write oracle_check.json here")
    return parser


def _load(args, **extra):
    cfg = load_config(args.config)
    solver = {"horizon": args.horizon, "max_iters": args.max_iters, "chi": args.chi}
    return cfg.with_overrides(solver=solver, seed=args.seed, output_dir=args.out, **extra)


def _failure_path(args):
    out = getattr(args, "out", None)
    if out is None and getattr(args, "config", None):
        try:
            out = load_config(args.config).experiment.output_dir
        except ConfigError:
            out = None
    return Path(out or ".") / f"{args.command}_failure.json"


def run(argv=None):
    """Entry point; returns the process exit code."""
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "oracle-check":
            summary = cmd_oracle_check(args.seed, args.out)
            print(json.dumps(summary, indent=2))
            return 0 if summary["all_pass"] else 1
        if args.command == "ilqg":
            summary = cmd_ilqg(_load(args))
        elif args.command == "idg":
            summary = cmd_idg(_load(args, gamma=args.gamma))
        else:
            grid = parse_grid(args.gamma_grid) if args.gamma_grid else None
            summary = cmd_sweep(_load(args, gamma_grid=grid, threshold=args.threshold), args.workers, args.restarts)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverFailure, NoProgress, DivergedRollout, FailureAtStep, HorizonMismatch, ConcavityViolated) as exc:
        report = getattr(exc, "report", None)
        diag = {"command": args.command, "error": type(exc).__name__, "message": str(exc), "report": report.to_dict() if report is not None else None}
        path = _failure_path(args)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_json(path, diag)
        print(f"solver failure: {exc} (diagnostics in {path})", file=sys.stderr)
        return 1
    brief = {k: summary[k] for k in ("command", "final_distance", "cost", "seconds") if k in summary}
    if args.command == "sweep":
        brief["gamma_star"] = summary["curve"]["gamma_star"]
        brief["seconds"] = summary["seconds"]
    print(json.dumps(brief))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
