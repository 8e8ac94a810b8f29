"""
Command line entry point.

    opkl run <config> [--output DIR]
    opkl validate [<config>] [--output DIR]
    opkl slopes <csv> [--tmin T] [--tmax T] [--column NAME]

Exit codes: 0 success, 1 failed tolerance check, 2 unreadable or invalid
config (the message names the location), 3 numeric failure during a run.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .errors import InvalidArgumentError, NumericError
from .experiments import persist, run_experiment, validate_experiment
from .spectral import fit_rate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

_ERROR_COLUMNS = ("pred_err", "est_err", "misspec_err_beta", "full_rel_err", "green_rel_err",
                  "reduced_err", "train_residual", "train_res")


def _parser():
    p = argparse.ArgumentParser(prog="opkl", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"opkl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--output", help="override the config's output directory")
    v = sub.add_parser("validate", help="run the invariant suite")
    v.add_argument("config", nargs="?")
    v.add_argument("--output")
    s = sub.add_parser("slopes", help="fit a log-log slope to a trajectory CSV")
    s.add_argument("csv")
    s.add_argument("--tmin", type=float)
    s.add_argument("--tmax", type=float)
    s.add_argument("--column", help="error column (default: first known error column)")
    return p


def _emit(summary):
    json.dump(summary, sys.stdout, indent=2, sort_keys=True, default=str)
    sys.stdout.write("\n")


def _short(outcome):
    keep = ("experiment", "config_hash", "fitted_slope", "theoretical_slope", "pass")
    return {k: outcome.summary[k] for k in keep if k in outcome.summary}


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    outcome = run_experiment(cfg)
    out = args.output or cfg["output"]
    persist(outcome, out)
    summary = _short(outcome)
    summary["output"] = out
    _emit(summary)
    if cfg.experiment == "validate" and not outcome.passed:
        return EXIT_FAIL
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config) if args.config else None
    outcome = validate_experiment(cfg)
    out = args.output or (cfg["output"] if cfg else None)
    if out:
        persist(outcome, out)
    for c in outcome.summary["checks"]:
        mark = "PASS" if c["pass"] else "FAIL"
        print(f"{mark} {c['name']} value={c['value']:.3e} {c['kind']}={c['tolerance']:g}")
    return EXIT_OK if outcome.passed else EXIT_FAIL


def read_trajectory(path, column=None):
    """Mean of ``column`` over trials for each ``t``; returns (column, t, mean)."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            fields = reader.fieldnames or []
    except OSError as exc:
        raise ConfigError(f"cannot read CSV ({exc.strerror})", str(path)) from exc
    if "t" not in fields:
        raise ConfigError("CSV has no 't' column", f"{path}:1")
    if column is None:
        column = next((c for c in _ERROR_COLUMNS if c in fields), None)
        if column is None:
            raise ConfigError("CSV has no known error column", f"{path}:1")
    elif column not in fields:
        raise ConfigError(f"CSV has no column {column!r}", f"{path}:1")
    acc = {}
    for i, row in enumerate(rows, start=2):
        try:
            t, v = float(row["t"]), float(row[column])
        except (TypeError, ValueError) as exc:
            raise ConfigError("non-numeric value", f"{path}:{i}") from exc
        acc.setdefault(t, []).append(v)
    ts = np.array(sorted(acc))
    return column, ts, np.array([np.mean(acc[t]) for t in ts])


def cmd_slopes(args) -> int:
    column, ts, mean = read_trajectory(args.csv, args.column)
    T = ts.max()
    tmin = args.tmin if args.tmin is not None else T / 200.0
    tmax = args.tmax if args.tmax is not None else T / 3.0
    keep = (ts >= tmin) & (ts <= tmax)
    slope = fit_rate(list(zip(ts, mean)), (tmin, tmax))
    _emit({"column": column, "window": [tmin, tmax], "points": int(keep.sum()), "slope": slope})
    return EXIT_OK


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = {"run": cmd_run, "validate": cmd_validate, "slopes": cmd_slopes}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"opkl: config error at {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"opkl: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvalidArgumentError as exc:
        print(f"opkl: invalid setting: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
