"""The twelve acceptance criteria at their stated tolerances."""

import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from opkl import datagen as dg
from opkl import fnspace as fs
from opkl import greens as gr
from opkl import kernels as kn
from opkl import spectral as sp
from opkl import validation as va
from opkl.config import load_config
from opkl.experiments import run_experiment
from opkl.theory import theoretical_exponent

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
TOL = 0.15


def _rate(name):
    cfg = load_config(CONFIGS / name)
    start = time.perf_counter()
    summary = run_experiment(cfg).summary
    return cfg, summary, time.perf_counter() - start


def _check_rate(report, number, name, target, label, budget=None):
    cfg, s, secs = _rate(name)
    assert s["horizons"] == [2 ** k for k in range(8, 15)] and s["trials"] == 30
    slope = s["fitted_slope"]
    ok = abs(slope - target) <= TOL and (budget is None or secs <= budget)
    report(number, ok, f"{label} slope {slope:.3f} vs {target:.3f} +/- {TOL} ({secs:.1f} s)")
    assert abs(slope - target) <= TOL
    if budget is not None:
        assert secs <= budget
    return s


def test_c01_finite_prediction_rate(report):
    _check_rate(report, 1, "pred_finite.toml", -0.5, "finite pred", budget=300)


def test_c02_online_prediction_rate(report):
    s = _check_rate(report, 2, "pred_online.toml", -0.6, "online pred")
    assert s["theoretical_slope"] == pytest.approx(-0.6)


def test_c03_finite_estimation_rate(report):
    target = theoretical_exponent("est", 1.0, 0.25, 2 / 3, "finite")
    _check_rate(report, 3, "est_finite.toml", target, "finite est")


def test_c04_misspecified_rate(report):
    _check_rate(report, 4, "misspec_finite.toml", -0.34, "misspec beta=0.2")


def test_c05_interpolation_norm(report):
    c_half, _ = integrate.quad(lambda s: 1.0 / (1.0 + s * s), 0, np.inf)
    worst = va.check_interpolation_norm((0.25, 0.5, 0.75), 20)
    ok = worst <= 1e-3 and abs(sp.interp_constant(0.5) - c_half) <= 1e-3
    report(5, ok, f"max |ratio/C(beta) - 1| = {worst:.2e} (tol 1e-3), C(0.5) = {c_half:.6f}")
    assert ok


def test_c06_representation_identity(report):
    worst = va.check_representation(10, 200)
    report(6, worst <= 1e-8, f"max relative discrepancy {worst:.2e} (tol 1e-8)")
    assert worst <= 1e-8


def test_c07_error_decomposition(report):
    rng = np.random.default_rng(0)
    fails = []
    for k in range(10):
        model, sched = va.random_spectral_setup(rng, 100)
        for alpha in (0.0, 0.5):
            d = sp.decomposition_check(model, sched, 100, 100, alpha, seed=k)
            if not d.holds:
                fails.append((k, alpha, d.slack, d.stderr))
    margin = va.check_decomposition(10, 100, 100)
    report(7, not fails, f"{20 - len(fails)}/20 (config, alpha) pairs with slack >= -2 stderr; "
                         f"min slack/(2 stderr) = {margin:.2f}")
    assert not fails


def test_c08_green_recovery(report):
    cfg = load_config(CONFIGS / "greens.toml")
    assert cfg["data.n"] == 65 and cfg["data.sigma"] == 0.01 and cfg["kernel.lengthscale"] == 0.2
    assert cfg["schedule.mode"] == "online" and cfg["schedule.theta"] == 0.5
    start = time.perf_counter()
    s = run_experiment(cfg).summary
    secs = time.perf_counter() - start
    assert s["checkpoints"] == [100, 500, 2000, 5000]
    ok = secs <= 120
    parts = []
    for tr in s["trials"]:
        g = tr["green_rel_err"]
        good = (all(b < a for a, b in zip(g, g[1:])) and g[-1] <= 0.5 * g[0]
                and tr["pred_drop"] >= 5)
        ok = ok and good
        parts.append(f"ratio {g[-1] / g[0]:.2f} drop {tr['pred_drop']:.1f}")
    report(8, ok, f"{'; '.join(parts)} ({secs:.1f} s)")
    assert ok


def test_c09_operator_kernel_structure(report):
    grid = fs.make_uniform_grid(65)
    k = kn.ScalarKernelSpec("gaussian", 0.2)
    K = kn.SeparableGreen(k, k, grid, grid)
    rep = gr.reproducing_check(K, 5)
    psd = gr.psd_check(K, n_batches=50)
    ok = rep <= 1e-8 and psd >= -1e-8
    report(9, ok, f"reproducing {rep:.2e} (tol 1e-8), min PSD form {psd:.3e} (>= -1e-8)")
    assert ok


def test_c10_encoder_decoder(report):
    cfg = load_config(CONFIGS / "encdec.toml")
    assert cfg["data.forward"] == "heat" and cfg["encdec.steps"] == 5000
    s = run_experiment(cfg).summary
    tr = s["trials"][0]
    ok = tr["commutation_gap"] <= 1e-8 and tr["drop"] >= 3
    report(10, ok, f"commutation gap {tr['commutation_gap']:.2e}, "
                   f"error {tr['full_rel_err'][0]:.3f} -> {tr['full_rel_err'][-1]:.3f} "
                   f"(x{tr['drop']:.1f}, need >= 3)")
    assert ok


def test_c11_cross_implementation(report):
    dev = va.check_cross_implementation(T=500)
    report(11, dev <= 1e-8, f"max relative deviation {dev:.2e} (tol 1e-8)")
    assert dev <= 1e-8


def test_c12_operator_norm_bound(report):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        lam = np.concatenate([[1.0], rng.uniform(0, 1, int(rng.integers(5, 300)))])
        etas = rng.uniform(0.0, 0.999, int(rng.integers(1, 400)))
        beta = float(rng.uniform(0.0, 3.0))
        worst = max(worst, sp.contraction_norm(lam, beta, etas) / sp.contraction_bound(beta, etas))
    report(12, worst <= 1.0, f"max norm / bound = {worst:.4f} over 100 schedules")
    assert worst <= 1.0
