"""Command-line front end.

Exit codes: 0 success, 2 config error, 3 numerical failure (nan/blow-up),
4 non-convergence. Every run writes ``run.json``; failed runs keep their
partial artifacts and add a ``FAILED`` marker file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from dmnls import __version__
from dmnls.config import ConfigError, ExperimentConfig, load_config
from dmnls.dispersion import psi_from_profile
from dmnls.evolution import evolve
from dmnls.grid import Field, gaussian, read_snapshot, write_snapshot
from dmnls.nonlinearity import audit_assumption
from dmnls.operators import audit_q_bounds
from dmnls.stability import stability_experiment
from dmnls.variational import GroundStateResult, ground_state, multiplier_and_residual, energy

log = logging.getLogger("dmnls")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NOCONV = 0, 2, 3, 4


class RunFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Partial(RunFailure):
    """Failure after some artifacts and metrics were already produced."""

    def __init__(self, code: int, message: str, metrics: dict):
        super().__init__(code, message)
        self.metrics = metrics


def _versions() -> dict:
    return {"dmnls": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if not isinstance(v, (int, np.integer)) else int(v) for v in row])


def _initial_field(cfg: ExperimentConfig) -> Field:
    grid = cfg.make_grid()
    i = cfg.initial
    if i.kind == "snapshot":
        f, _ = read_snapshot(i.path)
        if f.grid != grid:
            raise ConfigError("initial.path", "snapshot grid differs from [grid]")
        return f
    return gaussian(grid, i.amplitude, i.width, i.center)


def cmd_evolve(cfg: ExperimentConfig, out: Path, args) -> dict:
    ctx = cfg.make_context()
    traj = evolve(ctx, cfg.make_evolution(), _initial_field(cfg))
    _write_csv(out / "observables.csv", ["t", "mass", "energy", "h1_norm"],
               zip(traj.times, traj.mass, traj.energy, traj.h1))
    for k, (t, f) in enumerate(traj.snapshots):
        write_snapshot(out / f"snapshot_{k:05d}.bin", f, t)
    metrics = {"termination": traj.termination, "final_time": traj.final_time,
               "mass_drift": traj.mass_drift(), "energy_drift": traj.energy_drift()}
    if traj.termination != "completed":
        raise _Partial(EXIT_NUMERIC, f"evolution terminated early: {traj.termination}", metrics)
    return metrics


def cmd_groundstate(cfg: ExperimentConfig, out: Path, args) -> dict:
    ctx = cfg.make_context(dealias=False)
    lam = args.lam if args.lam is not None else cfg.groundstate.lam
    if ctx.d_av < 0:
        raise ConfigError("d_av", "groundstate runs need d_av >= 0")
    res = ground_state(ctx, lam, tol=cfg.groundstate.tol, max_iter=cfg.groundstate.max_iter)
    write_snapshot(out / "groundstate.bin", res.minimizer, 0.0)
    _write_json(out / "result.json", res.to_dict())
    _write_csv(out / "descent.csv", ["iter", "energy", "residual"],
               ((k, e, r) for k, (e, r) in enumerate(zip(res.energy_history, res.residual_history))))
    metrics = res.to_dict()
    if not res.converged:
        raise _Partial(EXIT_NOCONV, f"ground state not converged after {res.iterations} iterations", metrics)
    return metrics


def cmd_stability(cfg: ExperimentConfig, out: Path, args) -> dict:
    ctx = cfg.make_context()
    f, _ = read_snapshot(args.groundstate)
    if f.grid != ctx.grid:
        raise ConfigError("grid", "ground-state snapshot grid differs from [grid]")
    lam = ctx.grid.dx * float(np.sum(np.abs(f.values) ** 2))
    omega, residual = multiplier_and_residual(ctx.replace(dealias=False), f)
    tol = max(cfg.groundstate.tol, 1e-6)
    gs = GroundStateResult(f, lam, omega, energy(ctx, f), residual, 0, residual < 10 * tol)
    if not gs.converged:
        raise RunFailure(EXIT_NOCONV, f"snapshot is not a converged ground state (residual {residual:.3e})")
    s = cfg.stability
    rep = stability_experiment(ctx, gs, s.delta, s.kind, s.T, s.dt, s.K_stab, seed=cfg.seed,
                               stride=s.stride, mode=s.mode)
    _write_csv(out / "distance.csv", ["t", "d"], zip(rep.times, rep.distance))
    _write_json(out / "report.json", rep.to_dict())
    metrics = rep.to_dict()
    if rep.termination != "completed":
        raise _Partial(EXIT_NUMERIC, f"evolution terminated: {rep.termination}", metrics)
    return metrics


def cmd_psi(cfg: ExperimentConfig, out: Path, args) -> dict:
    psi = cfg.make_psi() if cfg.psi is not None else psi_from_profile(cfg.make_profile())
    pieces = psi.to_json()
    _write_json(out / "psi.json", {"pieces": pieces, "total_mass": psi.total_mass})
    rows = []
    for lo, hi, d in pieces:
        rows.append((lo, d))
        rows.append((hi, d))
    _write_csv(out / "psi.csv", ["r", "psi"], rows)
    print(json.dumps({"pieces": pieces}))
    return {"n_pieces": len(pieces), "total_mass": psi.total_mass}


def cmd_audit(cfg: ExperimentConfig, out: Path, args) -> dict:
    spec = cfg.make_nonlinearity()
    a = cfg.audit
    reports = []
    for name in a.assumptions:
        rep = audit_assumption(spec, name, (a.a_min, a.a_max), a.n_samples, p=a.p, p0=a.p0,
                               constant_cap=a.constant_cap, d_av_sign=1 if cfg.d_av >= 0 else -1)
        reports.append(rep.to_dict())
    qb = audit_q_bounds(cfg.make_context(), a.q_bounds_ensemble, seed=cfg.seed)
    result = {"assumptions": reports, "q_bounds": qb.to_dict()}
    _write_json(out / "audit.json", result)
    return {r["assumption"]: r["pass"] for r in reports}


COMMANDS = {"evolve": cmd_evolve, "groundstate": cmd_groundstate, "stability": cmd_stability,
            "psi-from-profile": cmd_psi, "audit": cmd_audit}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dmnls", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "psi-from-profile",
                       help="experiment config (TOML)")
        p.add_argument("--out", default=None, help="output directory (default: config output_dir)")
        if name == "groundstate":
            p.add_argument("--lambda", dest="lam", type=float, default=None)
        if name == "stability":
            p.add_argument("--groundstate", required=True, help="ground-state snapshot")
    return ap


def run(command: str, cfg: ExperimentConfig, out: Path, args) -> int:
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    meta = {"command": command, "config": cfg.to_dict(), "config_hash": cfg.hash(),
            "versions": _versions(), "seed": cfg.seed}
    t0 = time.perf_counter()
    code, status, metrics, error = EXIT_OK, "ok", {}, None
    try:
        metrics = COMMANDS[command](cfg, out, args)
    except _Partial as exc:
        code, status, metrics, error = exc.code, "failed", exc.metrics, str(exc)
    except RunFailure as exc:
        code, status, error = exc.code, "failed", str(exc)
    except ConfigError as exc:
        code, status, error = EXIT_CONFIG, "failed", str(exc)
    except FloatingPointError as exc:
        code, status, error = EXIT_NUMERIC, "failed", str(exc)
    meta.update(status=status, exit_code=code, metrics=metrics,
                wall_time_s=round(time.perf_counter() - t0, 3))
    if error:
        meta["error"] = error
        marker.write_text(error + "\n")
        log.error(error)
    _write_json(out / "run.json", meta)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output_dir)
    return run(args.command, cfg, out, args)


if __name__ == "__main__":
    sys.exit(main())
