"""
Finite-rank spectral testbed.

The integral operator is diagonal in the cosine basis
``phi_n(x) = sqrt(2) cos(pi n x)`` on the uniform law over [0, 1], with
eigenvalues ``sigma_n = n**(-1/s)``.  An iterate ``h_t`` is stored by its
coefficients ``b`` (shape (N, m)) in the basis ``{phi_n e_j}``, so every
error functional is a weighted sum of ``(b - a)**2`` and one SGD step costs
O(N m).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as kn
from .errors import InvalidArgumentError, NumericError
from .sgd import FiniteSchedule, OnlineSchedule, step_sizes

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class SpectralModel:
    N: int
    s_eff: float
    r: float
    m: int
    eigvals: np.ndarray
    g_coeffs: np.ndarray
    target_coeffs: np.ndarray
    noise_sigma: float
    seed: int = 0
    modes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "modes", np.arange(1, self.N + 1, dtype=float))

    def features(self, x) -> np.ndarray:
        """``phi_n(x)`` with shape ``x.shape + (N,)``."""
        x = np.asarray(x, dtype=float)
        return _SQRT2 * np.cos(np.pi * x[..., None] * self.modes)

    def target(self, x) -> np.ndarray:
        """``h_dagger(x)`` with shape ``x.shape + (m,)``."""
        return self.features(x) @ self.target_coeffs

    @property
    def kappa_sq(self) -> float:
        # sup_x sum sigma_n phi_n(x)^2, attained at x = 0
        return 2.0 * float(np.sum(self.eigvals))

    @property
    def lk_norm(self) -> float:
        return float(self.eigvals[0])

    def trace_power(self, s: float) -> float:
        """``Tr(L_K^s)`` counting all m output copies."""
        return self.m * float(np.sum(self.eigvals ** s))


def build_model(N: int, s: float, r: float, m: int = 1, sigma: float = 0.0,
                seed: int = 0, profile: str = "band") -> SpectralModel:
    """Draw ``g_dagger`` and set ``a = sigma**r * g``.

    ``profile="band"`` scales the Gaussian draw by ``n**(-1/2)`` before
    normalizing, which spreads the energy of ``g`` evenly across dyadic
    frequency bands; ``"flat"`` leaves the draw white.
    """
    if int(N) != N or N < 1:
        raise InvalidArgumentError("N must be a positive integer")
    if not 0.0 < s <= 1.0:
        raise InvalidArgumentError("s must lie in (0, 1]")
    if r < 0:
        raise InvalidArgumentError("r must be nonnegative")
    if int(m) != m or m < 1:
        raise InvalidArgumentError("m must be a positive integer")
    if sigma < 0:
        raise InvalidArgumentError("sigma must be nonnegative")
    if profile not in ("band", "flat"):
        raise InvalidArgumentError(f"unknown profile {profile!r}")
    N, m = int(N), int(m)
    n = np.arange(1, N + 1, dtype=float)
    eig = n ** (-1.0 / s)
    g = np.random.default_rng(seed).standard_normal((N, m))
    if profile == "band":
        g *= n[:, None] ** -0.5
    g /= np.linalg.norm(g)
    a = g if r == 0 else eig[:, None] ** r * g
    return SpectralModel(N, float(s), float(r), m, eig, g, a, float(sigma), int(seed))


def mercer_kernel(model: SpectralModel) -> kn.Diagonal:
    """Operator kernel ``sum_n sigma_n phi_n(x) phi_n(x') I_m`` for the generic learner."""
    return kn.Diagonal(kn.MercerKernel(model.eigvals, model.features), model.m)


def coeffs_from_expansion(model: SpectralModel, centers, coeffs) -> np.ndarray:
    """Eigen-coefficients of a Mercer-kernel expansion ``sum_t k(., x_t) c_t``."""
    phi = model.features(np.asarray(centers, dtype=float).ravel())
    return model.eigvals[:, None] * (phi.T @ np.asarray(coeffs, dtype=float))


# ---------------------------------------------------------------------------
# draws and steps
# ---------------------------------------------------------------------------


def draw_stream(model: SpectralModel, T: int, seed: int, trial: int):
    """Inputs ``x_1..x_T`` and noise ``eps_1..eps_T`` for one trial.

    Separate streams for inputs and noise make the draws prefix-consistent:
    the first ``k`` samples do not depend on ``T``.
    """
    x = np.random.default_rng([seed, trial, 0]).random(T)
    z = np.random.default_rng([seed, trial, 1]).standard_normal((T, model.m))
    return x, z * (model.noise_sigma / np.sqrt(model.m))


def observe(model: SpectralModel, x, eps):
    """``y = h_dagger(x) + eps``."""
    return model.target(x) + eps


def spectral_sgd_step(model: SpectralModel, b, eta: float, x, eps) -> np.ndarray:
    """One step in eigencoordinates; ``b`` may carry a leading batch axis.

    ``b`` has shape (N, m) or (S, N, m) with ``x`` of shape () or (S,) and
    ``eps`` of shape (m,) or (S, m).
    """
    b = np.asarray(b, dtype=float)
    phi = model.features(x)
    # elementwise products reduced along a fixed axis keep each trial's
    # arithmetic independent of how many trials share the batch
    y = np.sum(phi[..., :, None] * model.target_coeffs, axis=-2) + eps
    with np.errstate(over="ignore", invalid="ignore"):
        rho = np.sum(phi[..., :, None] * b, axis=-2) - y
        if not np.all(np.isfinite(rho)):
            raise NumericError("non-finite residual in spectral step")
        return b - eta * (model.eigvals * phi)[..., :, None] * rho[..., None, :]


# ---------------------------------------------------------------------------
# error functionals
# ---------------------------------------------------------------------------


def _check_beta(beta, lo_open=False):
    if lo_open:
        if not 0.0 < beta < 1.0:
            raise InvalidArgumentError(f"beta must lie in (0, 1), got {beta}")
    elif not 0.0 <= beta <= 1.0:
        raise InvalidArgumentError(f"beta must lie in [0, 1], got {beta}")


def misspec_error(model: SpectralModel, b, beta: float):
    """``sum sigma_n**(-beta) (b - a)**2`` over the trailing (N, m) axes."""
    _check_beta(beta)
    d2 = (np.asarray(b, dtype=float) - model.target_coeffs) ** 2
    w = model.eigvals ** (-beta)
    return np.sum(d2 * w[:, None], axis=(-2, -1))


def exact_errors(model: SpectralModel, b, betas=()) -> dict:
    """Prediction, estimation and interpolation-space errors of ``b``.

    Returns ``{"pred": ..., "est": ..., "misspec": {beta: ...}}``; each value
    is a scalar for a single iterate or an array over leading batch axes.
    """
    for beta in betas:
        _check_beta(beta)
    return {
        "pred": misspec_error(model, b, 0.0),
        "est": misspec_error(model, b, 1.0),
        "misspec": {float(beta): misspec_error(model, b, beta) for beta in betas},
    }


def kfunctional2(model: SpectralModel, f, t):
    """``K_2(f, t)`` for the couple (L2, H_K) via the pointwise minimizer.

    The infimum of ``||f - g||^2 + t^2 ||g||_K^2`` is attained at
    ``g_n = f_n / (1 + t^2 / sigma_n)``, giving
    ``K_2(f, t)^2 = sum_n t^2/sigma_n / (t^2/sigma_n + 1) f_n^2``.
    ``t`` may be an array; the result has the same shape.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise InvalidArgumentError("t must be positive")
    f2 = _mode_energy(model, f)
    q = t[..., None] ** 2 / model.eigvals
    return np.sqrt(np.sum(q / (q + 1.0) * f2, axis=-1))


def _mode_energy(model, f):
    f = np.asarray(f, dtype=float)
    if f.shape[0] != model.N:
        raise InvalidArgumentError(f"coefficients need leading length {model.N}")
    return f ** 2 if f.ndim == 1 else np.sum(f.reshape(model.N, -1) ** 2, axis=1)


def default_log_grid(model: SpectralModel, per_decade: int = 40) -> np.ndarray:
    lo = np.log10(np.sqrt(model.eigvals[-1])) - 12.0
    hi = 12.0
    return np.logspace(lo, hi, int(np.ceil((hi - lo) * per_decade)) + 1)


def interp_norm_via_kfunc(model: SpectralModel, f, beta: float, log_grid=None) -> float:
    """``||f||_{beta,2}`` from ``int_0^inf (t^-beta K_2(f,t))^2 dt/t``.

    The integral is taken by the trapezoid rule in ``log t`` on
    ``log_grid``, with the two power-law tails outside the grid added in
    closed form.
    """
    _check_beta(beta, lo_open=True)
    t = default_log_grid(model) if log_grid is None else np.asarray(log_grid, dtype=float)
    if t.size < 2 or np.any(np.diff(t) <= 0):
        raise InvalidArgumentError("log_grid must be strictly ascending")
    if t[0] > np.sqrt(model.eigvals[-1]) * 1e-2 or t[-1] < 1e2:
        raise InvalidArgumentError("log_grid does not cover the spectrum")
    f2 = _mode_energy(model, f)
    vals = t ** (-2.0 * beta) * kfunctional2(model, f, t) ** 2
    body = np.trapezoid(vals, np.log(t))
    low = t[0] ** (2.0 - 2.0 * beta) / (2.0 - 2.0 * beta) * np.sum(f2 / model.eigvals)
    high = t[-1] ** (-2.0 * beta) / (2.0 * beta) * np.sum(f2)
    return float(np.sqrt(body + low + high))


def interp_constant(beta: float) -> float:
    """``C(beta) = int_0^inf s^(1-2 beta) / (1 + s^2) ds = pi / (2 sin(pi beta))``."""
    _check_beta(beta, lo_open=True)
    return 0.5 * np.pi / np.sin(np.pi * beta)


def effective_dimension(model: SpectralModel, lam: float) -> float:
    if not lam > 0:
        raise InvalidArgumentError("lam must be positive")
    return model.m * float(np.sum(model.eigvals / (model.eigvals + lam)))


# ---------------------------------------------------------------------------
# multi-trial runs
# ---------------------------------------------------------------------------


@dataclass
class SpectralRun:
    """Errors recorded at ``times`` for each trial; ``final`` holds ``b_{T+1}``."""

    times: list
    trials: list
    errors: dict
    final: np.ndarray


def _etas(sched, T):
    if isinstance(sched, (OnlineSchedule, FiniteSchedule)):
        return step_sizes(sched, T)
    raise InvalidArgumentError("unsupported schedule")


def run_spectral(model: SpectralModel, sched, T: int, trials=(0,), seed: int = 0,
                 checkpoints=None, betas=()) -> SpectralRun:
    """Run all ``trials`` in lockstep (one batched step per ``t``).

    ``checkpoints`` lists sample counts ``t`` in ``0..T`` at which errors
    are recorded (default: only ``T``).
    """
    if T < 1:
        raise InvalidArgumentError("T must be >= 1")
    trials = list(trials)
    times = sorted(set([T] if checkpoints is None else checkpoints))
    if times[0] < 0 or times[-1] > T:
        raise InvalidArgumentError("checkpoints must lie in [0, T]")
    etas = _etas(sched, T)
    draws = [draw_stream(model, T, seed, k) for k in trials]
    X = np.stack([d[0] for d in draws], axis=1)
    E = np.stack([d[1] for d in draws], axis=1)
    b = np.zeros((len(trials), model.N, model.m))
    keys = ["pred", "est"] + [f"misspec_{float(be)!r}" for be in betas]
    errs = {k: np.empty((len(trials), len(times))) for k in keys}
    want = {t: i for i, t in enumerate(times)}

    def record(t):
        with np.errstate(over="ignore", invalid="ignore"):
            e = exact_errors(model, b, betas)
        if not np.all(np.isfinite(e["est"])):
            raise NumericError(f"error functionals overflowed at t = {t}")
        i = want[t]
        errs["pred"][:, i] = e["pred"]
        errs["est"][:, i] = e["est"]
        for be in betas:
            errs[f"misspec_{float(be)!r}"][:, i] = e["misspec"][float(be)]

    if 0 in want:
        record(0)
    for t in range(1, T + 1):
        b = spectral_sgd_step(model, b, etas[t - 1], X[t - 1], E[t - 1])
        if t in want:
            record(t)
    return SpectralRun(times, trials, errs, b)


def fit_rate(points, window=None) -> float:
    """Least-squares slope of ``log err`` against ``log t`` inside ``window``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidArgumentError("points must be a sequence of (t, err) pairs")
    t, e = pts[:, 0], pts[:, 1]
    if window is not None:
        lo, hi = window
        keep = (t >= lo) & (t <= hi)
        t, e = t[keep], e[keep]
    if t.size < 5:
        raise InvalidArgumentError(f"fit window holds {t.size} points; need at least 5")
    if np.any(e <= 0) or np.any(t <= 0):
        raise InvalidArgumentError("t and err must be positive")
    return float(np.polyfit(np.log(t), np.log(e), 1)[0])


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------


def representation_check(model: SpectralModel, sched, T: int, seed: int = 0, b1=None) -> float:
    """Max relative discrepancy in the unrolled-error identity.

    With ``W_t = L_K(h_t - h_dagger) + ev*_{x_t}(y_t - h_t(x_t))`` the
    iteration satisfies

        h_{T+1} - h_dagger = prod_t (I - eta_t L_K)(h_1 - h_dagger)
                             + sum_t eta_t prod_{j>t} (I - eta_j L_K) W_t,

    which for ``h_1 = 0`` is the familiar ``-prod (I - eta L_K) h_dagger + ...``.
    """
    if T < 1:
        raise InvalidArgumentError("T must be >= 1")
    etas = _etas(sched, T)
    x, eps = draw_stream(model, T, seed, 0)
    sig = model.eigvals[:, None]
    a = model.target_coeffs
    b = np.zeros_like(a) if b1 is None else np.array(b1, dtype=float)
    start = b.copy()
    acc = np.zeros_like(a)
    for t in range(T):
        phi = model.features(x[t])
        y = phi @ a + eps[t]
        resid = y - phi @ b
        W = sig * (b - a) + sig * phi[:, None] * resid[None, :]
        # propagate earlier terms by (I - eta_t L) and add the new one
        acc = (1.0 - etas[t] * sig) * acc + etas[t] * W
        b = spectral_sgd_step(model, b, etas[t], x[t], eps[t])
    prod = np.prod(1.0 - np.outer(etas, model.eigvals), axis=0)[:, None]
    rhs = prod * (start - a) + acc
    lhs = b - a
    # relative to the problem size so that an exact fixed point is not 0/0
    scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)), np.max(np.abs(a)),
                np.max(np.abs(start)), np.finfo(float).tiny)
    return float(np.max(np.abs(lhs - rhs)) / scale)


@dataclass
class Decomposition:
    lhs: float
    t1: float
    t2: float
    slack: float
    stderr: float

    @property
    def holds(self) -> bool:
        return self.slack >= -2.0 * self.stderr


def decomposition_check(model: SpectralModel, sched, T: int, n_seeds: int = 30,
                        alpha: float = 0.5, seed: int = 0) -> Decomposition:
    """Monte-Carlo comparison of ``E||L^alpha (h_{T+1} - h_dagger)||_K^2``
    with ``T1(alpha) + T2(alpha)``.

    ``T2`` uses the across-seed mean prediction error of each ``h_t``.  The
    standard error is that of the per-seed slack ``T1 + T2 - lhs``.
    """
    if n_seeds < 30:
        raise InvalidArgumentError("decomposition_check needs n_seeds >= 30")
    if alpha not in (0, 0.5):
        raise InvalidArgumentError("alpha must be 0 or 1/2")
    etas = _etas(sched, T)
    sig = model.eigvals
    a = model.target_coeffs
    run = run_spectral(model, sched, T, trials=range(n_seeds), seed=seed,
                       checkpoints=range(T + 1))
    mean_pred = run.errors["pred"].mean(axis=0)[:T]
    w = sig ** (2 * alpha - 1)
    d = run.final - a
    lhs = np.einsum("snm,n->s", d ** 2, w)
    one = 1.0 - np.outer(etas, sig)
    t1 = float(np.sum(w[:, None] * (np.prod(one, axis=0)[:, None] * a) ** 2))
    # tail[t] = prod_{j > t} (1 - eta_j sigma)^2, t = 0..T-1
    sq = one ** 2
    tail = np.ones_like(sq)
    for t in range(T - 2, -1, -1):
        tail[t] = tail[t + 1] * sq[t + 1]
    norms = np.max(sig ** (2 * alpha) * tail, axis=1)
    t2 = float(np.sum(2 * model.kappa_sq * (model.noise_sigma ** 2 + mean_pred)
                      * etas ** 2 * norms))
    per = t1 + t2 - lhs
    return Decomposition(float(lhs.mean()), t1, t2, float(per.mean()),
                         float(per.std(ddof=1) / np.sqrt(n_seeds)))


def contraction_norm(eigvals, beta: float, etas) -> float:
    """``||A^beta prod_j (I - eta_j A)^2||`` for diagonal ``A``."""
    lam = np.asarray(eigvals, dtype=float)
    etas = np.asarray(etas, dtype=float)
    p = np.prod((1.0 - np.outer(etas, lam)) ** 2, axis=0)
    pw = np.ones_like(lam) if beta == 0 else lam ** beta
    return float(np.max(pw * p))


def contraction_bound(beta: float, etas, a_norm: float | None = None) -> float:
    """Upper bounds on :func:`contraction_norm`.

    Without ``a_norm`` returns ``(beta/2e)^beta (sum eta)^(-beta)``; with it
    returns ``2((beta/2e)^beta + ||A||^beta) / (1 + (sum eta)^beta)``.
    """
    total = float(np.sum(etas))
    c = 1.0 if beta == 0 else (beta / (2 * np.e)) ** beta
    if a_norm is None:
        return c * total ** (-beta)
    return 2.0 * (c + a_norm ** beta) / (1.0 + total ** beta)


def step_sum(etas, v: float) -> float:
    """``sum_{t<T} eta_t^2 / (1 + (sum_{j>t} eta_j)^v)``."""
    etas = np.asarray(etas, dtype=float)
    tails = np.cumsum(etas[::-1])[::-1]
    return float(np.sum(etas[:-1] ** 2 / (1.0 + tails[1:] ** v)))


def constant_step_sum_bound(eta: float, T: int, v: float) -> float:
    """Closed-form bound on :func:`step_sum` for constant steps."""
    if v <= 0:
        raise InvalidArgumentError("v must be positive")
    if v < 1:
        return eta ** (2 - v) * (T + 1) ** (1 - v) / (1 - v)
    if v == 1:
        return eta * (1 + np.log(eta * (T + 1)))
    return eta * v / (v - 1)


def decaying_step_sum_shape(eta1: float, theta: float, T: int, v: float) -> float:
    """Bound on :func:`step_sum` for ``eta_t = eta1 t^-theta`` up to the constant ``delta``."""
    pre = eta1 ** 2 / min(1.0, (eta1 / (1 - theta)) ** v)
    n = T + 1
    if v < 1:
        if theta < 0.5:
            f = n ** (1 - v - theta * (2 - v))
        elif theta == 0.5:
            f = n ** (-v / 2) * np.log(n)
        else:
            f = n ** (-v * (1 - theta))
    elif v == 1:
        f = n ** (-theta) * np.log(n) if theta <= 0.5 else n ** (-(1 - theta))
    else:
        f = n ** (-min(theta, v * (1 - theta)))
    return pre * f
