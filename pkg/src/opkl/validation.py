"""
Invariant suite run by ``opkl validate``.

Each check returns a measured value and a tolerance; ``upper`` checks pass
when ``value <= tolerance`` and ``lower`` checks when ``value >= tolerance``.
"""

from __future__ import annotations

import numpy as np

from . import encdec as ed
from . import fnspace as fs
from . import greens as gr
from . import kernels as kn
from . import sgd
from . import spectral as sp
from . import datagen as dg


def random_spectral_setup(rng, T: int):
    """A random small model and a schedule whose first step respects ``1/kappa^2``."""
    model = sp.build_model(int(rng.integers(10, 60)), float(rng.uniform(0.3, 1.0)),
                           float(rng.uniform(0.0, 1.5)), int(rng.integers(1, 4)),
                           float(rng.uniform(0.0, 1.0)), int(rng.integers(0, 2 ** 31)))
    cap = 1.0 / model.kappa_sq
    if rng.random() < 0.5:
        sched = sgd.OnlineSchedule(float(rng.uniform(0.2, 1.0)) * cap, float(rng.uniform(0.05, 0.95)))
    else:
        theta = float(rng.uniform(0.05, 0.95))
        sched = sgd.FiniteSchedule(float(rng.uniform(0.2, 1.0)) * cap * T ** theta, theta, T)
    return model, sched


def check_interpolation_norm(betas=(0.25, 0.5, 0.75), n_funcs=20, seed=0) -> float:
    """Worst relative gap between the K-functional norm and ``C(beta) sum sigma^-beta f^2``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for beta in betas:
        for _ in range(n_funcs):
            model = sp.build_model(int(rng.integers(5, 200)), float(rng.uniform(0.2, 1.0)), 0.0,
                                   1, 0.0, int(rng.integers(0, 2 ** 31)))
            f = rng.standard_normal(model.N)
            ratio = (sp.interp_norm_via_kfunc(model, f, beta) ** 2
                     / np.sum(model.eigvals ** (-beta) * f ** 2))
            worst = max(worst, abs(ratio / sp.interp_constant(beta) - 1.0))
    return worst


def check_representation(n_configs=10, T=200, seed=0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(n_configs):
        model, sched = random_spectral_setup(rng, T)
        worst = max(worst, sp.representation_check(model, sched, T, seed=k))
    return worst


def check_decomposition(n_configs=10, n_seeds=100, T=100, seed=0) -> float:
    """Smallest ``slack / (2 stderr)`` margin; the check holds when this is >= -1."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for k in range(n_configs):
        model, sched = random_spectral_setup(rng, T)
        for alpha in (0.0, 0.5):
            d = sp.decomposition_check(model, sched, T, n_seeds, alpha, seed=k)
            worst = min(worst, d.slack / max(2.0 * d.stderr, 1e-300))
    return float(worst)


def check_cross_implementation(T=500, seed=0) -> float:
    """Eigencoordinate SGD against the kernel-expansion learner with the Mercer kernel."""
    model = sp.build_model(40, 0.5, 0.75, 2, 0.3, seed)
    sched = sgd.OnlineSchedule(0.5 / model.kappa_sq, 0.5)
    x, eps = sp.draw_stream(model, T, seed, 0)
    y = sp.observe(model, x, eps)
    state, _ = sgd.run(sgd.Dataset(x, y), sp.mercer_kernel(model), sched, metrics_every=T)
    b_kernel = sp.coeffs_from_expansion(model, state.centers, state.coeffs)
    run = sp.run_spectral(model, sched, T, trials=[0], seed=seed)
    b_spec = run.final[0]
    return float(np.max(np.abs(b_kernel - b_spec)) / np.max(np.abs(b_spec)))


def check_contraction(n_schedules=100, seed=0) -> float:
    """Largest ratio of the operator norm to the contraction bound (<= 1 expected)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_schedules):
        lam = np.sort(rng.uniform(0, 1, int(rng.integers(5, 300))))[::-1]
        lam = np.concatenate([[1.0], lam])
        T = int(rng.integers(1, 400))
        etas = rng.uniform(0.0, 1.0, T) * 0.999
        beta = float(rng.uniform(0.0, 3.0))
        norm = sp.contraction_norm(lam, beta, etas)
        worst = max(worst, norm / sp.contraction_bound(beta, etas),
                    norm / sp.contraction_bound(beta, etas, a_norm=1.0))
    return float(worst)


def run_suite() -> list:
    grid = fs.make_uniform_grid(257)
    s = fs.GridFn.from_callable(grid, lambda x: np.sin(2 * np.pi * x))

    g65 = fs.make_uniform_grid(65)
    k = kn.ScalarKernelSpec("gaussian", 0.2)
    K = kn.SeparableGreen(k, k, g65, g65)
    rng = np.random.default_rng(0)
    F = dg.sample_gp_batch(dg.GpSpec(), g65, rng, 40)
    U = dg.heat_forward(F, 0.025, 1.0, g65)
    ired, ored = ed.pca_reduction(F[:30], 4), ed.pca_reduction(U[:30], 4)
    interp = ed.InterpolatorSpec(kn.ScalarKernelSpec("matern52", 0.1),
                                 ed.default_points(g65, 9), jitter=0.0)

    checks = [
        ("fnspace.sin_sq_integral", abs(fs.inner(s, s) - 0.5), 1e-4, "upper"),
        ("kernels.separable_psd", gr.psd_check(K, 50), -1e-8, "lower"),
        ("greens.reproducing", gr.reproducing_check(K, 5), 1e-8, "upper"),
        ("greens.isometry", gr.isometry_check(K), 1e-10, "upper"),
        ("spectral.interpolation_norm", check_interpolation_norm(), 1e-3, "upper"),
        ("spectral.representation", check_representation(), 1e-8, "upper"),
        ("spectral.decomposition_margin", check_decomposition(), -1.0, "lower"),
        ("spectral.cross_implementation", check_cross_implementation(), 1e-8, "upper"),
        ("spectral.contraction_ratio", check_contraction(), 1.0, "upper"),
        ("encdec.projection", ed.projection_check(interp, F[:5], g65), 1e-8, "upper"),
        ("encdec.commutation",
         ed.commutation_check((F[:30], U[:30]), ired, ored, kn.ScalarKernelSpec("gaussian", 1.0),
                              sgd.OnlineSchedule(0.5, 0.5), F[30:], [10, 30]), 1e-8, "upper"),
    ]
    out = []
    for name, value, tol, kind in checks:
        ok = value <= tol if kind == "upper" else value >= tol
        out.append({"name": name, "value": float(value), "tolerance": tol, "kind": kind,
                    "pass": bool(ok)})
    return out
