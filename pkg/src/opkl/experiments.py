"""
Config-driven experiment runners.

Each runner returns an :class:`Outcome` holding CSV tables and a JSON
summary; :func:`write_outcome` persists them.  Trials are dispatched to a
worker pool bounded by ``OPKL_THREADS`` and merged in trial order, so the
output is independent of scheduling.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import datagen as dg
from . import encdec as ed
from . import greens as gr
from . import kernels as kn
from . import sgd
from . import spectral as sp
from .config import ExperimentConfig
from .errors import InvalidArgumentError, NumericError
from .fnspace import make_uniform_grid
from .theory import theoretical_exponent


def worker_count() -> int:
    raw = os.environ.get("OPKL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise InvalidArgumentError(f"OPKL_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise InvalidArgumentError("OPKL_THREADS must be >= 1")
    return n


def map_trials(fn, trials):
    """``[fn(t) for t in trials]`` evaluated on the worker pool, in order."""
    trials = list(trials)
    n = min(worker_count(), len(trials))
    if n <= 1:
        return [fn(t) for t in trials]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, trials))


def _chunks(seq, n):
    seq = list(seq)
    k = max(1, min(n, len(seq)))
    return [c for c in (seq[i::k] for i in range(k)) if c]


@dataclass
class Table:
    columns: list
    rows: list


@dataclass
class Outcome:
    summary: dict
    tables: dict = field(default_factory=dict)
    passed: bool | None = None
    greens: dict = field(default_factory=dict)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def write_outcome(outcome: Outcome, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    for name, table in outcome.tables.items():
        write_csv(os.path.join(directory, name), table.columns, table.rows)
    with open(os.path.join(directory, "summary.json"), "w") as fh:
        json.dump(_jsonable(outcome.summary), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else None
    return v


def _schedule(cfg, horizon=None):
    if cfg["schedule.mode"] == "online":
        return sgd.OnlineSchedule(cfg["schedule.eta"], cfg["schedule.theta"])
    return sgd.FiniteSchedule(cfg["schedule.eta"], cfg["schedule.theta"], horizon)


def mean_curve(times, per_trial):
    """Mean and standard error across trials (axis 0)."""
    E = np.asarray(per_trial, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        mean = E.mean(axis=0)
        se = E.std(axis=0, ddof=1) / np.sqrt(E.shape[0]) if E.shape[0] > 1 else np.zeros_like(mean)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(se))):
        raise NumericError("error curve overflowed; the step size is too large")
    return mean, se


def _fit(times, mean, tmin, tmax):
    return sp.fit_rate(list(zip(times, mean)), (tmin, tmax))


# ---------------------------------------------------------------------------
# spectral rate study
# ---------------------------------------------------------------------------


def spectral_rate(cfg: ExperimentConfig) -> Outcome:
    model = sp.build_model(cfg["model.N"], cfg["model.s"], cfg["model.r"], cfg["model.m"],
                           cfg["model.sigma"], cfg["model.seed"], cfg["model.profile"])
    horizons = sorted(int(t) for t in cfg["spectral.horizons"])
    if not horizons or horizons[0] < 1:
        raise InvalidArgumentError("spectral.horizons must be positive")
    beta = cfg["spectral.beta"]
    regime = cfg["spectral.regime"]
    trials = list(range(cfg["seeds"]))
    mode = cfg["schedule.mode"]
    groups = _chunks(trials, worker_count())

    def run_group(T, group):
        sched = _schedule(cfg, T)
        cps = [T] if mode == "finite" else horizons
        return sp.run_spectral(model, sched, T, group, cfg["seed"], cps, (beta,))

    per = {k: np.empty((len(trials), len(horizons))) for k in ("pred", "est", "mis")}

    def store(run, cols):
        idx = [trials.index(t) for t in run.trials]
        for out, src in (("pred", "pred"), ("est", "est"), ("mis", f"misspec_{beta!r}")):
            per[out][np.ix_(idx, cols)] = run.errors[src]

    if mode == "finite":
        for j, T in enumerate(horizons):
            for run in map_trials(lambda g: run_group(T, g), groups):
                store(run, [j])
    else:
        for run in map_trials(lambda g: run_group(horizons[-1], g), groups):
            store(run, list(range(len(horizons))))

    rows = [{"trial": k, "t": T, "pred_err": per["pred"][i, j], "est_err": per["est"][i, j],
             "misspec_err_beta": per["mis"][i, j]}
            for i, k in enumerate(trials) for j, T in enumerate(horizons)]
    sel = {"pred": "pred", "est": "est"}.get(regime, "mis")
    mean, se = mean_curve(horizons, per[sel])
    tmin = cfg["fit.tmin"] if cfg["fit.tmin"] is not None else horizons[0]
    tmax = cfg["fit.tmax"] if cfg["fit.tmax"] is not None else horizons[-1]
    slope = _fit(horizons, mean, tmin, tmax)
    s_theory = cfg["spectral.capacity_s"] if cfg["spectral.capacity_s"] is not None else model.s_eff
    try:
        target = theoretical_exponent(regime, model.r, s_theory, cfg["schedule.theta"], mode,
                                      beta if regime == "misspec" else None)
        theory_note = None
    except InvalidArgumentError as exc:
        target, theory_note = None, str(exc)
    tol = cfg["fit.tolerance"]
    passed = None if target is None else bool(abs(slope - target) <= tol)
    logt = np.log(np.asarray(horizons, dtype=float))
    coef = (slope, np.mean(np.log(mean) - slope * logt))
    curve = [{"t": T, "mean_err": m, "stderr": e, "fit": float(np.exp(coef[1]) * T ** coef[0])}
             for T, m, e in zip(horizons, mean, se)]
    summary = {
        "experiment": "spectral-rate", "config_hash": cfg.digest, "regime": regime,
        "mode": mode, "beta": beta, "trials": len(trials),
        "params": {"N": model.N, "s": model.s_eff, "r": model.r, "m": model.m,
                   "sigma": model.noise_sigma, "eta": cfg["schedule.eta"],
                   "theta": cfg["schedule.theta"], "capacity_s": s_theory},
        "horizons": horizons, "mean_err": list(mean), "window": [tmin, tmax],
        "fitted_slope": slope, "theoretical_slope": target, "tolerance": tol,
        "pass": passed,
    }
    if theory_note:
        summary["theory_note"] = theory_note
    tables = {
        "trajectory.csv": Table(["trial", "t", "pred_err", "est_err", "misspec_err_beta"], rows),
        "curve.csv": Table(["t", "mean_err", "stderr", "fit"], curve),
    }
    return Outcome(summary, tables, passed)


# ---------------------------------------------------------------------------
# Green's functions
# ---------------------------------------------------------------------------


def _gp(cfg):
    return dg.GpSpec(cfg["data.tau"], cfg["data.alpha"], cfg["data.n_modes"])


def _scalar(cfg):
    return kn.ScalarKernelSpec(cfg["kernel.family"], cfg["kernel.lengthscale"],
                               cfg["kernel.amplitude"])


def green_trial(cfg, trial):
    grid = make_uniform_grid(cfg["data.n"])
    steps, held = cfg["greens.steps"], cfg["greens.heldout"]
    ds = dg.make_dataset(dg.PoissonForward(), _gp(cfg), dg.NoiseSpec(cfg["data.sigma"]),
                         steps + held, grid, cfg["seed"] + trial)
    if steps < 1 or held < 1:
        raise InvalidArgumentError("greens.steps and greens.heldout must be >= 1")
    data = gr.GreenDataset(ds.inputs[:steps], ds.outputs[:steps], grid, grid)
    K = kn.SeparableGreen(_scalar(cfg), _scalar(cfg), grid, grid)
    truth = gr.poisson_green_oracle(grid)
    est, rows = gr.run_green(data, K, _schedule(cfg, steps), truth, metrics_every=steps,
                             heldout=(ds.inputs[steps:], ds.clean[steps:]), trial=trial,
                             checkpoints=cfg["greens.checkpoints"])
    return est.assembled, rows


def greens_experiment(cfg: ExperimentConfig) -> Outcome:
    trials = list(range(cfg["seeds"]))
    results = map_trials(lambda k: green_trial(cfg, k), trials)
    cps = sorted(int(t) for t in cfg["greens.checkpoints"])
    rows, per = [], []
    for k, (_, traj) in zip(trials, results):
        rows += traj
        at = {r["t"]: r for r in traj}
        g = [at[t]["green_rel_err"] for t in cps]
        p = [at[t]["pred_err"] for t in cps]
        ratio = g[-1] / g[0]
        drop = p[0] / p[-1]
        mono = bool(all(b < a for a, b in zip(g, g[1:])))
        ok = mono and ratio <= cfg["greens.max_ratio"] and drop >= cfg["greens.min_pred_drop"]
        per.append({"trial": k, "green_rel_err": g, "pred_err": p, "ratio": ratio,
                    "pred_drop": drop, "monotone": mono, "pass": bool(ok)})
    passed = all(p["pass"] for p in per)
    grid = make_uniform_grid(cfg["data.n"])
    G0 = results[0][0]
    tables = {"trajectory.csv": Table(["trial", "t", "train_res", "pred_err", "green_rel_err"], rows)}
    summary = {"experiment": "greens", "config_hash": cfg.digest, "checkpoints": cps,
               "trials": per, "pass": passed,
               "green_files": ["green_trial0.csv", "green_oracle.csv"]}
    greens = {"green_trial0.csv": (G0, grid),
              "green_oracle.csv": (gr.poisson_green_oracle(grid), grid)}
    return Outcome(summary, tables, passed, greens)


# ---------------------------------------------------------------------------
# encoder-decoder
# ---------------------------------------------------------------------------


def _reductions(cfg, grid, Ftr, Utr):
    p = cfg["encdec.p"]
    if cfg["encdec.reduction"] == "pca":
        return ed.pca_reduction(Ftr, p), ed.pca_reduction(Utr, p)
    pts = cfg["encdec.points"]
    pts = ed.default_points(grid, p) if pts is None else np.asarray(pts, dtype=float)
    red = ed.point_reduction(grid, pts, jitter=cfg["encdec.jitter"])
    return red, red


def encdec_trial(cfg, trial):
    grid = make_uniform_grid(cfg["data.n"])
    steps = cfg["encdec.steps"]
    count = int(cfg["data.count"]) if cfg["data.count"] is not None else int(np.ceil(steps / 0.7)) + 1
    fwd = dg.HeatForward(cfg["data.nu"], cfg["data.t_end"])
    ds = dg.make_dataset(fwd, _gp(cfg), dg.NoiseSpec(cfg["data.sigma"]), count, grid,
                         cfg["seed"] + trial)
    Ftr, Utr, _ = ds.part("train")
    if len(Ftr) < steps:
        raise InvalidArgumentError(f"training split has {len(Ftr)} samples, need {steps}")
    Fva, _, Uva = ds.part("val")
    Fte, _, Ute = ds.part("test")
    ired, ored = _reductions(cfg, grid, Ftr, Utr)
    kernel = _scalar(cfg)
    eta = cfg["schedule.eta"]
    tuning = None
    if cfg["encdec.tune_lengthscales"] or cfg["encdec.tune_etas"]:
        ells = cfg["encdec.tune_lengthscales"] or [kernel.lengthscale]
        etas = cfg["encdec.tune_etas"] or [eta]
        ell, eta, table = ed.tune((Ftr[:steps], Utr[:steps]), (Fva, Uva), ired, ored, grid,
                                  ells, etas, cfg["schedule.theta"], kernel.family)
        kernel = kn.ScalarKernelSpec(kernel.family, ell, kernel.amplitude)
        tuning = {"lengthscale": ell, "eta": eta, "table": table}
    if cfg["schedule.mode"] == "online":
        sched = sgd.OnlineSchedule(eta, cfg["schedule.theta"])
    else:
        sched = sgd.FiniteSchedule(eta, cfg["schedule.theta"], steps)
    train = (Ftr[:steps], Utr[:steps])
    cps = sorted(int(t) for t in cfg["encdec.checkpoints"])
    _, rows = ed.encdec_run(train, ired, ored, kernel, sched, grid, metrics_every=steps,
                            test=(Fte, Ute), trial=trial, checkpoints=cps)
    gap = None
    if cfg["encdec.commutation"]:
        gap = ed.commutation_check(train, ired, ored, kernel, sched, Fte[:100], cps or [steps])
    return rows, gap, tuning


def encdec_experiment(cfg: ExperimentConfig) -> Outcome:
    trials = list(range(cfg["seeds"]))
    results = map_trials(lambda k: encdec_trial(cfg, k), trials)
    cps = sorted(int(t) for t in cfg["encdec.checkpoints"]) or [cfg["encdec.steps"]]
    rows, per = [], []
    for k, (traj, gap, tuning) in zip(trials, results):
        rows += traj
        at = {r["t"]: r["full_rel_err"] for r in traj}
        drop = at[cps[0]] / at[cps[-1]]
        ok = drop >= cfg["encdec.min_drop"] and (gap is None or gap <= 1e-8)
        entry = {"trial": k, "full_rel_err": [at[t] for t in cps], "drop": drop,
                 "commutation_gap": gap, "pass": bool(ok)}
        if tuning:
            entry["tuning"] = tuning
        per.append(entry)
    passed = all(p["pass"] for p in per)
    tables = {"trajectory.csv": Table(["trial", "t", "reduced_err", "full_rel_err"], rows)}
    summary = {"experiment": "encdec", "config_hash": cfg.digest, "checkpoints": cps,
               "reduction": cfg["encdec.reduction"], "p": cfg["encdec.p"],
               "trials": per, "pass": passed}
    return Outcome(summary, tables, passed)


def validate_experiment(cfg: ExperimentConfig | None = None) -> Outcome:
    from .validation import run_suite

    results = run_suite()
    passed = all(r["pass"] for r in results)
    summary = {"experiment": "validate", "config_hash": cfg.digest if cfg else None,
               "checks": results, "pass": passed}
    table = Table(["check", "value", "tolerance", "pass"],
                  [{"check": r["name"], "value": r["value"], "tolerance": r["tolerance"],
                    "pass": r["pass"]} for r in results])
    return Outcome(summary, {"checks.csv": table}, passed)


RUNNERS = {
    "spectral-rate": spectral_rate,
    "greens": greens_experiment,
    "encdec": encdec_experiment,
    "validate": validate_experiment,
}


def run_experiment(cfg: ExperimentConfig) -> Outcome:
    return RUNNERS[cfg.experiment](cfg)


def persist(outcome: Outcome, directory) -> None:
    write_outcome(outcome, directory)
    for name, (G, grid) in outcome.greens.items():
        gr.write_green_csv(G, os.path.join(directory, name), grid, grid)
