"""Command-line front end.

Every command prints one JSON document on stdout, also on failure.  Exit
status: 0 when everything requested passed, 1 when a check failed, 2 for
an invalid configuration or a solver error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .checks import hjb_applicable, oracle_checks, run_checks
from .config import RunConfig, load_config
from .hjb import ConvergenceError, indifference_price
from .model import ValidationError, paths_to_csv, simulate_paths, tau_serialized
from .montecarlo import PathSource, estimate_hedge_error
from .mvh import optimal_strategy_mvh, solve_mvh

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _emit(doc: dict) -> None:
    sys.stdout.write(json.dumps(_clean(doc), indent=2) + "\n")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg: RunConfig, args) -> tuple[dict, int]:
    paths = simulate_paths(cfg.params, cfg.n_steps, cfg.n_paths, cfg.d0, cfg.seed)
    target = _outdir(args) / "paths.csv"
    with open(target, "w", newline="") as fh:
        paths_to_csv(paths, fh)
    T = cfg.params.T
    doc = {"paths_csv": str(target), "n_paths": paths.n_paths, "n_steps": paths.n_steps,
           "seed": cfg.seed, "overflow_paths": int(paths.overflow.sum()),
           "tauA": [tau_serialized(t, T) for t in paths.tauA[:10]],
           "tauB": [tau_serialized(t, T) for t in paths.tauB[:10]]}
    return doc, EXIT_OK


def cmd_price(cfg: RunConfig, args) -> tuple[dict, int]:
    reason = hjb_applicable(cfg.params)
    if reason:
        raise ValidationError(reason)
    ip = indifference_price(cfg.params, cfg.claim, cfg.delta, cfg.grid_spec, cfg.d0)
    fine = indifference_price(cfg.params, cfg.claim, cfg.delta, cfg.grid_spec.refined(), cfg.d0)
    target = _outdir(args) / "hjb_surface.csv"
    with open(target, "w", newline="") as fh:
        ip.surface_with.to_csv(fh)
    doc = {"price": ip.price, "V0_with": ip.V0_with, "V0_without": ip.V0_without,
           "grid_convergence_delta": abs(fine.price - ip.price),
           "foc_max": max(ip.surface_with.max_foc_residual(), ip.surface_without.max_foc_residual()),
           "surface_csv": str(target)}
    return doc, EXIT_OK


def cmd_hedge(cfg: RunConfig, args) -> tuple[dict, int]:
    sol = solve_mvh(cfg.params, cfg.claim, cfg.grid_spec, cfg.d0, "auto", cfg.tolerances["picard"])
    target = _outdir(args) / "mvh_surface.csv"
    with open(target, "w", newline="") as fh:
        sol.to_csv(fh)
    doc = {"theta0": sol.first.theta0, "y0": sol.second.y0, "xi0": sol.third.xi0,
           "value": sol.value(cfg.x0), "mc_value": None, "mc_stderr": None,
           "n_paths": cfg.n_paths, "seed": cfg.seed, "surface_csv": str(target)}
    status = EXIT_OK
    if cfg.n_paths > 1:
        src = PathSource(cfg.params, sol.first.times.size - 1, cfg.n_paths, cfg.d0, cfg.seed)
        est = estimate_hedge_error(src, cfg.params, cfg.claim, optimal_strategy_mvh(sol), cfg.x0)
        doc["mc_value"], doc["mc_stderr"] = est.mean, est.stderr
        ok = est.zscore(doc["value"]) < cfg.verify["n_sigmas"]
        doc["pass"] = ok
        status = EXIT_OK if ok else EXIT_FAIL
    return doc, status


def _suite(results) -> tuple[dict, int]:
    rows = [r.to_dict() for r in results]
    failed = [r["check_name"] for r in rows if r["pass"] is False]
    doc = {"checks": rows, "n_pass": sum(r["pass"] is True for r in rows),
           "n_fail": len(failed), "n_skipped": sum(r["pass"] is None for r in rows), "failed": failed}
    return doc, EXIT_FAIL if failed else EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> tuple[dict, int]:
    return _suite(run_checks(cfg))


def cmd_oracles(cfg: RunConfig, args) -> tuple[dict, int]:
    return _suite(oracle_checks(cfg))


COMMANDS = {
    "simulate": cmd_simulate,
    "price-indifference": cmd_price,
    "hedge-mvh": cmd_hedge,
    "verify": cmd_verify,
    "oracles": cmd_oracles,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="credithedge", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default="out", help="directory for CSV outputs (default: out)")
    ap.add_argument("--seed", type=int, help="override mc.seed")
    ap.add_argument("--paths", type=int, help="override mc.n_paths")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    doc = {"command": args.command}
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.paths)
        doc["resolved_config"] = cfg.to_dict()
        result, status = COMMANDS[args.command](cfg, args)
        doc.update(result)
        doc["status"] = "ok" if status == EXIT_OK else "check failure"
    except (ValidationError, OSError) as exc:
        doc.update(status="validation failure", error=str(exc))
        status = EXIT_INVALID
    except ConvergenceError as exc:
        doc.update(status="solver failure", error=str(exc))
        status = EXIT_INVALID
    except Exception as exc:  # keep the JSON contract even on bugs
        doc.update(status="internal error", error=f"{type(exc).__name__}: {exc}")
        status = EXIT_INVALID
    _emit(doc)
    return status


if __name__ == "__main__":
    sys.exit(main())
