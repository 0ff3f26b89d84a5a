"""Command-line entry point: ``chemorep {simulate,optimize,verify,mms,seed}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checks
from . import config as cfgmod
from . import cost as co
from . import diagnostics as dg
from . import forward as fw
from . import grid as gr
from . import mms
from .errors import ChemorepError, LineSearchFailure

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2

log = logging.getLogger("chemorep")


# ------------------------------------------------------------------ output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def write_snapshots(out: Path, grid: gr.Grid, name: str, values: np.ndarray, stride: int) -> int:
    """``{name}_{node:05d}.txt`` every ``stride`` rows plus the last one."""
    snap = out / "snapshots"
    snap.mkdir(parents=True, exist_ok=True)
    rows = list(range(0, len(values), stride))
    if rows[-1] != len(values) - 1:
        rows.append(len(values) - 1)
    for k in rows:
        gr.write_field(snap / f"{name}_{k:05d}.txt", grid, values[k])
    return len(rows)


def write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _error(out: Path | None, command: str, exc: Exception) -> int:
    payload = {"command": command, "error": type(exc).__name__, "message": str(exc)}
    text = json.dumps(payload, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(text + "\n")
    return EXIT_ERROR


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg: cfgmod.RunConfig, out: Path, args) -> int:
    sc = cfg.scenario
    traj = sc.solve(None)
    stride = cfg.output_stride
    write_snapshots(out, sc.grid, "u", traj.u, stride)
    write_snapshots(out, sc.grid, "v", traj.v, stride)
    if traj.w is not None:
        write_snapshots(out, sc.grid, "w", traj.w, stride)
    report = dg.diagnose(traj, sc.params)
    write_json(out / "report.json", report.to_dict())
    mass = report.mass_series
    energy = report.energy_series
    resid = [np.nan] + list(report.energy_residuals)
    write_rows(out / "timeseries.csv", ["t", "mass", "E", "R"],
               zip(sc.timegrid.nodes, mass, energy, resid))
    if cfg.eps_sweep:
        write_rows(out / "eps_sweep.csv", ["eps", "deviation_Linf_L2", "decreasing"], eps_sweep(cfg))
    return EXIT_OK


def eps_sweep(cfg: cfgmod.RunConfig) -> list[tuple]:
    """``||v_eps - v_0||_{L^inf(L^2)}`` for each configured eps, largest first."""
    sc = cfg.scenario
    base = fw.solve_state(sc.grid, sc.u0, sc.v0, None, replace(sc.params, eps=0.0), sc.timegrid)
    rows, prev = [], np.inf
    for eps in sorted(cfg.eps_sweep, reverse=True):
        run = fw.solve_state(sc.grid, sc.u0, sc.v0, None, replace(sc.params, eps=eps), sc.timegrid)
        dev = gr.bochner_norm(sc.grid, sc.timegrid, run.v - base.v, np.inf, 2)
        rows.append((eps, dev, int(dev < prev)))
        prev = dev
    return rows


def cmd_optimize(cfg: cfgmod.RunConfig, out: Path, args) -> int:
    sc = cfg.scenario
    if sc.params.eps > 0:
        raise ValueError("optimize requires eps = 0 (the gradient is exact for the unregularized stepper)")
    cost, box, opts, f0 = cfgmod.cost_setup(cfg)
    try:
        result = co.pgd(f0, sc, cost, box, opts)
    except LineSearchFailure as exc:
        write_snapshots(out, sc.grid, "f_last", exc.last_control, cfg.output_stride)
        _history_csv(out / "history.csv", exc.history or [])
        raise
    g, tg = sc.grid, sc.timegrid
    ev = result.evaluation
    write_snapshots(out, g, "f", result.f, cfg.output_stride)
    write_snapshots(out, g, "u", ev.traj.u, cfg.output_stride)
    write_snapshots(out, g, "v", ev.traj.v, cfg.output_stride)
    write_snapshots(out, g, "sigma", ev.adjoint.sigma, cfg.output_stride)
    write_snapshots(out, g, "eta", ev.adjoint.eta, cfg.output_stride)
    _history_csv(out / "history.csv", result.history)
    rng = np.random.default_rng(args.seed)
    vi = co.vi_check(result.f, ev.grad, box, g, tg, co.sample_box(box, result.f, g, rng, 100))
    report = {
        "reason": result.reason,
        "iterations": len(result.history) - 1,
        "J": ev.cost.total,
        "cost_terms": ev.cost.__dict__,
        "optimality_residual": result.residual,
        "vi_check": vi,
        "adjoint_norms": ev.adjoint.norms(g, tg),
        "diagnostics": dg.diagnose(ev.traj, sc.params, cost.delta).to_dict(),
    }
    if args.check_gradient:
        report["gradient_check"] = gradient_report(sc, result.f, cost, rng)
    write_json(out / "report.json", report)
    return EXIT_OK


def gradient_report(sc: co.Scenario, f, cost, rng, directions: int = 10, step: float = 1e-4) -> dict:
    g, tg = sc.grid, sc.timegrid
    ev = co.evaluate(sc, f, cost)
    rows = []
    for _ in range(directions):
        F = rng.standard_normal(f.shape) * g.mask_float
        fd, used = checks.central_difference(sc, f, F, cost, step)
        an = gr.spacetime_inner(g, tg, ev.grad, F)
        rows.append({"finite_difference": fd, "adjoint": an, "step": used, "abs_error": abs(fd - an),
                     "rel_error": abs(fd - an) / max(abs(fd), abs(an), 1e-300)})
    # near a stationary point the pairings are tiny and the relative error
    # is dominated by finite-difference cancellation; abs_error is reported too
    return {"directions": rows, "max_rel_error": max(r["rel_error"] for r in rows),
            "max_abs_error": max(r["abs_error"] for r in rows)}


def _history_csv(path: Path, history: list[dict]) -> None:
    keys = ["iter", "J", "term_u_5p2", "term_u_103", "term_v", "term_f", "residual", "step"]
    write_rows(path, keys, ([h[k] for k in keys] for h in history))


def cmd_verify(cfg: cfgmod.RunConfig, out: Path, args) -> int:
    settings = dict(cfg.verify)
    if args.seed is not None:
        settings["seed"] = args.seed
    results = checks.run_battery(settings)
    for r in results:
        print(r.line())
    passed = all(r.passed for r in results)
    write_json(out / "verify.json", {"passed": passed, "checks": [r.to_dict() for r in results]})
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_mms(cfg: cfgmod.RunConfig, out: Path, args) -> int:
    """One table per (target, dim, study), plus ``convergence.csv`` stacking them all."""
    targets = [args.mms] if args.mms else list(mms.TARGETS)
    dims = [args.dim] if args.dim else [1, 2]
    summary, combined, passed = {}, [], True
    for target in targets:
        for dim in dims:
            for study, runner, need in (("space", mms.space_study, 1.9), ("time", mms.time_study, 0.9)):
                rows = runner(target, dim)
                name = f"convergence_{target}_{dim}d_{study}.csv"
                mms.write_table(out / name, rows)
                combined += [(target, dim, study, r.level, r.h, r.dt, r.error, "" if r.rate is None else r.rate)
                             for r in rows]
                order = rows[-1].rate
                ok = order >= need
                passed &= ok
                summary[f"{target}/{dim}d/{study}"] = {"file": name, "order": order, "required": need, "passed": ok}
                print(f"{'PASS' if ok else 'FAIL'} mms {target} {dim}d {study}: order={order:.3f} required={need}")
    write_rows(out / "convergence.csv", ["target", "dim", "study", "level", "h", "dt", "error", "rate"], combined)
    write_json(out / "mms.json", {"passed": passed, "tables": summary})
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_seed(cfg: cfgmod.RunConfig, out: Path, args) -> int:
    sc = cfg.scenario
    f, traj = fw.seed_admissible(sc.grid, sc.u0, sc.v0, sc.params, sc.timegrid)
    write_snapshots(out, sc.grid, "f", f, cfg.output_stride)
    write_snapshots(out, sc.grid, "u", traj.u, cfg.output_stride)
    write_snapshots(out, sc.grid, "v", traj.v, cfg.output_stride)
    ru, rv = co.step_residuals(traj, sc.params)
    write_json(out / "report.json", {
        "u_residual_max": float(ru.max()), "v_residual_max": float(rv.max()),
        "f_min": float(f.min()), "f_max": float(f.max()), "v_min": float(traj.v.min()),
    })
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "verify": cmd_verify,
    "mms": cmd_mms,
    "seed": cmd_seed,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemorep", description=__doc__)
    parser.add_argument("--config-reference", action="store_true",
                        help="print every configuration key with its default and exit")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="INI file (defaults used when omitted)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed for randomized checks and samples")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "optimize":
            p.add_argument("--check-gradient", action="store_true",
                           help="compare the gradient at the optimum with finite differences")
        if name == "mms":
            p.add_argument("--mms", choices=mms.TARGETS, default=None, help="single target (default: all)")
            p.add_argument("--dim", type=int, choices=(1, 2), default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config_reference:
        print(cfgmod.reference_page())
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out
    try:
        cfg = cfgmod.load(args.config)
        if args.seed is None:
            args.seed = int(cfg.verify.get("seed", 0))
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except (ChemorepError, ValueError, OSError) as exc:
        return _error(out, args.command, exc)


if __name__ == "__main__":
    sys.exit(main())
