"""
Encoder-decoder operator learning.

An encoder maps a grid function to a short vector (point measurements or
PCA scores) and a decoder maps vectors back to grid functions (minimal-norm
kernel interpolation or PCA synthesis).  Both reductions used here are
affine, ``encode(v) = (v - mu) E`` and ``decode(c) = mu + c D`` with
``E D`` a projection, which is what makes the reduced iteration and the
full-space iteration with the projected kernel coincide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels as kn
from . import sgd
from .errors import InvalidArgumentError, LinearSolveError, ShapeError
from .fnspace import Grid1D, GridFn


@dataclass(frozen=True, eq=False)
class MeasurementSpec:
    points: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.points, dtype=float))
        if p.ndim != 1 or p.size < 1:
            raise InvalidArgumentError("need at least one measurement point")
        if not np.all(np.isfinite(p)):
            raise InvalidArgumentError("measurement points must be finite")
        if np.unique(p).size != p.size:
            raise InvalidArgumentError("measurement points must be distinct")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "points", p)

    @property
    def m(self) -> int:
        return self.points.size


def _grid_values(f, grid):
    if isinstance(f, GridFn):
        return f.values, f.grid
    if grid is None:
        raise InvalidArgumentError("grid is required for raw values")
    v = np.asarray(f, dtype=float)
    if v.shape[-1] != grid.n:
        raise ShapeError(f"expected {grid.n} values, got {v.shape[-1]}")
    return v, grid


def measurement_matrix(spec: MeasurementSpec, grid: Grid1D) -> np.ndarray:
    """Matrix ``E`` (grid.n, m) with ``measure(f) = f E`` (piecewise linear)."""
    if spec.points.min() < grid.a or spec.points.max() > grid.b:
        raise InvalidArgumentError("measurement points lie outside the grid domain")
    E = np.empty((grid.n, spec.m))
    for j, xi in enumerate(spec.points):
        E[:, j] = _hat_weights(grid.points, xi)
    return E


def _hat_weights(x, xi):
    w = np.zeros(x.size)
    k = int(np.searchsorted(x, xi, side="right")) - 1
    if k >= x.size - 1:
        w[-1] = 1.0
        return w
    lam = (xi - x[k]) / (x[k + 1] - x[k])
    w[k] = 1.0 - lam
    w[k + 1] = lam
    return w


def measure(f, spec: MeasurementSpec, grid: Grid1D | None = None) -> np.ndarray:
    """Values at the measurement points by linear interpolation on the grid."""
    v, grid = _grid_values(f, grid)
    if spec.points.min() < grid.a or spec.points.max() > grid.b:
        raise InvalidArgumentError("measurement points lie outside the grid domain")
    if v.ndim == 1:
        return np.interp(spec.points, grid.points, v)
    return v @ measurement_matrix(spec, grid)


# ---------------------------------------------------------------------------
# minimal-norm interpolation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InterpolatorSpec:
    """Kernel interpolation onto ``points`` with ``K(Xi, Xi) + jitter I`` factorized once."""

    kernel: kn.ScalarKernelSpec
    points: np.ndarray
    jitter: float = 1e-10
    _factor: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.jitter < 0:
            raise InvalidArgumentError("jitter must be nonnegative")
        P = np.atleast_1d(np.asarray(self.points, dtype=float))
        if P.ndim != 1 or P.size < 1:
            raise InvalidArgumentError("need at least one interpolation point")
        object.__setattr__(self, "points", P)
        A = kn.gram(self.kernel, P) + self.jitter * np.eye(P.size)
        try:
            fac = scipy.linalg.cho_factor(A, lower=True)
        except np.linalg.LinAlgError as exc:
            raise LinearSolveError("kernel matrix is not positive definite") from exc
        if np.min(np.abs(np.diag(fac[0]))) < 1e-14 * np.sqrt(np.max(np.diag(A))):
            raise LinearSolveError("kernel matrix is numerically singular")
        object.__setattr__(self, "_factor", fac)

    @property
    def m(self) -> int:
        return self.points.size

    def solve(self, c) -> np.ndarray:
        """``(K(Xi, Xi) + jitter I)^{-1} c`` (c has length m on its last axis)."""
        c = np.asarray(c, dtype=float)
        if c.shape[-1] != self.m:
            raise ShapeError(f"expected {self.m} values, got {c.shape[-1]}")
        return scipy.linalg.cho_solve(self._factor, c.T).T

    def cross(self, x) -> np.ndarray:
        """``K(x, Xi)`` with shape (len(x), m)."""
        return self.kernel.pairwise(np.atleast_1d(np.asarray(x, dtype=float)), self.points)


@dataclass(frozen=True, eq=False)
class Interpolant:
    """``x -> K(x, Xi) alpha``."""

    interp: InterpolatorSpec
    alpha: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return self.interp.cross(x) @ self.alpha

    def on_grid(self, grid: Grid1D) -> GridFn:
        return GridFn(grid, self(grid.points))


def minnorm_interpolate(c, interp: InterpolatorSpec) -> Interpolant:
    """Minimal-norm function with (approximately, under jitter) the values ``c`` at ``points``."""
    c = np.asarray(c, dtype=float)
    if c.ndim != 1:
        raise ShapeError("c must be a vector")
    return Interpolant(interp, interp.solve(c))


def projection_check(interp: InterpolatorSpec, probes, grid: Grid1D, seed: int = 0) -> float:
    """Max deviation in ``phi(phi_hat(c)) = c`` and ``P(P f) = P f``.

    ``probes`` are grid functions (rows of values on ``grid``).  The
    measurement ``phi`` of an interpolant is taken by exact evaluation.
    """
    if interp.jitter != 0:
        raise InvalidArgumentError("projection_check needs jitter = 0")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        c = rng.standard_normal(interp.m)
        worst = max(worst, float(np.max(np.abs(minnorm_interpolate(c, interp)(interp.points) - c))))
    spec = MeasurementSpec(interp.points)
    for f in np.atleast_2d(np.asarray(probes, dtype=float)):
        pf = minnorm_interpolate(measure(f, spec, grid), interp)
        ppf = minnorm_interpolate(pf(interp.points), interp)
        worst = max(worst, float(np.max(np.abs(ppf(grid.points) - pf(grid.points)))))
    return worst


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PcaBasis:
    """``components`` has shape (dim, p); ``singular_values`` lists all of them."""

    mean: np.ndarray
    components: np.ndarray
    singular_values: np.ndarray
    p: int


def pca_fit(samples, p: int) -> PcaBasis:
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    n, dim = X.shape
    if int(p) != p or not 1 <= p <= min(n, dim):
        raise InvalidArgumentError(f"p must lie in [1, {min(n, dim)}], got {p}")
    mean = X.mean(axis=0)
    _, sv, Vt = np.linalg.svd(X - mean, full_matrices=False)
    return PcaBasis(mean, Vt[:p].T.copy(), sv, int(p))


def pca_encode(basis: PcaBasis, v) -> np.ndarray:
    return (np.asarray(v, dtype=float) - basis.mean) @ basis.components


def pca_decode(basis: PcaBasis, c) -> np.ndarray:
    return basis.mean + np.asarray(c, dtype=float) @ basis.components.T


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Reduction:
    """Affine encoder/decoder pair ``encode(v) = (v - offset) E``, ``decode(c) = offset + c D``."""

    kind: str
    offset: np.ndarray
    enc: np.ndarray
    dec: np.ndarray

    @property
    def dim(self) -> int:
        return self.enc.shape[1]

    def encode(self, V) -> np.ndarray:
        return (np.asarray(V, dtype=float) - self.offset) @ self.enc

    def decode(self, C) -> np.ndarray:
        return self.offset + np.asarray(C, dtype=float) @ self.dec

    def project(self, V) -> np.ndarray:
        """Linear part ``P`` of ``decode . encode`` applied to centred ``V``."""
        return np.asarray(V, dtype=float) @ self.enc @ self.dec


def pca_reduction(samples, p: int) -> Reduction:
    basis = pca_fit(samples, p)
    return Reduction("pca", basis.mean, basis.components, basis.components.T.copy())


def point_reduction(grid: Grid1D, points, kernel: kn.ScalarKernelSpec | None = None,
                    jitter: float = 1e-10) -> Reduction:
    """Measurements at ``points`` decoded by minimal-norm interpolation."""
    spec = MeasurementSpec(points)
    kernel = kernel or kn.ScalarKernelSpec("matern52", 0.1)
    interp = InterpolatorSpec(kernel, spec.points, jitter)
    E = measurement_matrix(spec, grid)
    # row j of D is the interpolant of the j-th unit vector on the grid
    D = interp.solve(interp.cross(grid.points)).T
    return Reduction("points", np.zeros(grid.n), E, D)


def default_points(grid: Grid1D, p: int) -> np.ndarray:
    """``p`` grid nodes spread evenly over the grid (endpoints included when p > 1)."""
    if int(p) != p or not 1 <= p <= grid.n:
        raise InvalidArgumentError(f"p must lie in [1, {grid.n}], got {p}")
    idx = np.unique(np.round(np.linspace(0, grid.n - 1, int(p))).astype(int))
    return grid.points[idx]


# ---------------------------------------------------------------------------
# learning
# ---------------------------------------------------------------------------


def relative_errors(P, U, grid: Grid1D) -> np.ndarray:
    """``||P_j - U_j|| / ||U_j||`` in L2(grid) for each row."""
    w = grid.weights
    num = np.sqrt(((P - U) ** 2) @ w)
    den = np.sqrt((U ** 2) @ w)
    return num / np.maximum(den, np.finfo(float).tiny)


def encdec_run(train, in_red: Reduction, out_red: Reduction, kernel: kn.ScalarKernelSpec,
               sched, grid: Grid1D, metrics_every: int = 100, test=None, trial: int = 0,
               checkpoints=()):
    """Reduced-space SGD with ``k(|. - .|) I`` on encoded pairs.

    ``train`` and ``test`` are ``(inputs, outputs)`` arrays of grid values.
    Returns the reduced iterate and rows ``trial, t, reduced_err,
    full_rel_err`` (mean relative errors on ``test``; NaN without it).
    """
    if in_red.dim < 1 or out_red.dim < 1:
        raise InvalidArgumentError("reductions must retain at least one coordinate")
    F, U = (np.atleast_2d(np.asarray(a, dtype=float)) for a in train)
    A, B = in_red.encode(F), out_red.encode(U)
    K = kn.Diagonal(kernel, out_red.dim)
    if test is not None:
        Ft, Ut = test
        At, Bt = in_red.encode(Ft), out_red.encode(Ut)

    def metrics(state, t):
        if test is None:
            return {"reduced_err": float("nan"), "full_rel_err": float("nan")}
        C = sgd.predict_many(state, K, At)
        red = np.linalg.norm(C - Bt, axis=1) / np.maximum(np.linalg.norm(Bt, axis=1), 1e-300)
        full = relative_errors(out_red.decode(C), Ut, grid)
        return {"reduced_err": float(red.mean()), "full_rel_err": float(full.mean())}

    state, rows = sgd.run(sgd.Dataset(A, B), K, sched, metrics_every, [metrics], trial,
                          checkpoints)
    keep = ("trial", "t", "reduced_err", "full_rel_err")
    return state, [{k: r[k] for k in keep} for r in rows]


def predict_reduced(state, in_red: Reduction, out_red: Reduction, kernel, F) -> np.ndarray:
    """``decode(g(encode(f)))`` for each row of ``F``."""
    K = kn.Diagonal(kernel, out_red.dim)
    return out_red.decode(sgd.predict_many(state, K, in_red.encode(F)))


def lifted_run(train, in_red: Reduction, out_red: Reduction, kernel: kn.ScalarKernelSpec,
               sched, checkpoints=(), probe=None):
    """Full-space iteration ``h_{t+1} = h_t - eta_t k(|phi(.) - phi(f_t)|) P (h_t(f_t) - u_t)``.

    The iterate is ``offset + h~`` where ``h~`` lives in the range of ``P``;
    with the projection applied to the centred targets upstream this is the
    generic learner over the projected radial kernel.  Returns the final
    state and, for each checkpoint, the full-space predictions at ``probe``.
    """
    F, U = (np.atleast_2d(np.asarray(a, dtype=float)) for a in train)
    phi = in_red.encode(F)
    Y = out_red.project(U - out_red.offset)
    K = kn.ProjectedRadial(kernel, in_red.dim, U.shape[1])
    snaps = {}
    want = set(checkpoints)
    metric = []
    if probe is not None and want:
        Pphi = in_red.encode(probe)

        def grab(state, t):
            if t in want:
                snaps[t] = out_red.offset + sgd.predict_many(state, K, Pphi)
            return {}
        metric = [grab]
    state, _ = sgd.run(sgd.Dataset(phi, Y), K, sched, len(F), metric, checkpoints=want)
    return state, snaps


def commutation_check(train, in_red, out_red, kernel, sched, probe, checkpoints) -> float:
    """Max relative gap between the reduced and lifted paths at ``checkpoints``."""
    F, U = train
    K = kn.Diagonal(kernel, out_red.dim)
    A, B = in_red.encode(F), out_red.encode(U)
    want = set(checkpoints)
    Aprobe = in_red.encode(probe)
    reduced = {}

    def grab(state, t):
        if t in want:
            reduced[t] = out_red.decode(sgd.predict_many(state, K, Aprobe))
        return {}

    sgd.run(sgd.Dataset(A, B), K, sched, len(A), [grab], checkpoints=want)
    _, lifted = lifted_run(train, in_red, out_red, kernel, sched, checkpoints, probe)
    scale = max(float(np.max(np.abs(lifted[t]))) for t in want)
    return max(float(np.max(np.abs(reduced[t] - lifted[t]))) for t in want) / scale


def tune(train, val, in_red, out_red, grid, lengthscales, etas, theta: float = 0.5,
         family: str = "gaussian"):
    """Grid search over ``(lengthscale, eta1)`` by final validation relative error.

    Returns ``(best_lengthscale, best_eta1, table)`` where ``table`` lists
    ``(lengthscale, eta1, val_err)``.
    """
    table = []
    for ell in lengthscales:
        for eta in etas:
            k = kn.ScalarKernelSpec(family, ell)
            _, rows = encdec_run(train, in_red, out_red, k, sgd.OnlineSchedule(eta, theta),
                                 grid, metrics_every=len(train[0]), test=val)
            table.append((float(ell), float(eta), rows[-1]["full_rel_err"]))
    finite = [row for row in table if np.isfinite(row[2])]
    if not finite:
        raise InvalidArgumentError("every tuning run diverged")
    best = min(finite, key=lambda row: row[2])
    return best[0], best[1], table
