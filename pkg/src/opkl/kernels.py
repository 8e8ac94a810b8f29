"""
Scalar kernels and operator-valued kernels.

Every operator-valued kernel used here factors as a scalar weight times a
fixed bounded operator on the output space,

    K(x, x') y = s(x, x') * A y,

with ``A = diag(T)`` for :class:`Diagonal`, ``A = K1`` (the integral
operator of ``k1`` on the output grid) for :class:`SeparableGreen`, and
``A = I`` for :class:`ProjectedRadial`.  :func:`kernel_weights` returns the
scalar part for a batch of centres and :func:`output_operator` applies
``A``.  Kernel expansions over many centres are evaluated as
``A (sum_t s(x, c_t) coef_t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, ShapeError
from .fnspace import Grid1D

FAMILIES = (
    "gaussian",
    "matern12",
    "matern32",
    "matern52",
    "inverse-multiquadric",
    "dot-product",
)
RADIAL = FAMILIES[:-1]

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class ScalarKernelSpec:
    family: str
    lengthscale: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(
                f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not self.lengthscale > 0:
            raise InvalidArgumentError("lengthscale must be positive")
        if not self.amplitude > 0:
            raise InvalidArgumentError("amplitude must be positive")

    @property
    def radial(self) -> bool:
        return self.family in RADIAL

    def profile(self, d):
        """Radial profile ``k(d)`` for distances ``d >= 0``."""
        if not self.radial:
            raise InvalidArgumentError("dot-product kernel has no radial profile")
        r = np.asarray(d, dtype=float) / self.lengthscale
        if self.family == "gaussian":
            v = np.exp(-0.5 * r * r)
        elif self.family == "matern12":
            v = np.exp(-r)
        elif self.family == "matern32":
            v = (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r)
        elif self.family == "matern52":
            v = (1.0 + _SQRT5 * r + 5.0 * r * r / 3.0) * np.exp(-_SQRT5 * r)
        else:
            v = 1.0 / np.sqrt(1.0 + r * r)
        return self.amplitude * v

    def pairwise(self, X, Y):
        """Kernel matrix between the rows of ``X`` (a, d) and ``Y`` (b, d)."""
        X = _as_points(X)
        Y = _as_points(Y)
        if X.shape[1] != Y.shape[1]:
            raise ShapeError(f"input dimension mismatch {X.shape[1]} vs {Y.shape[1]}")
        if self.family == "dot-product":
            return self.amplitude * (X @ Y.T)
        return self.profile(_distances(X, Y))


@dataclass(frozen=True, eq=False)
class MercerKernel:
    """Truncated Mercer series ``k(x, x') = sum_n lam_n phi_n(x) phi_n(x')``.

    ``features`` maps an array of scalar inputs of shape (...,) to
    feature values of shape (..., N).
    """

    eigvals: np.ndarray
    features: object = field(repr=False)

    def pairwise(self, X, Y):
        X = _as_points(X)
        Y = _as_points(Y)
        if X.shape[1] != 1 or Y.shape[1] != 1:
            raise ShapeError("Mercer series kernels take scalar inputs")
        return (self.features(X[:, 0]) * self.eigvals) @ self.features(Y[:, 0]).T

    def diagonal_sup(self, probes):
        phi = self.features(np.asarray(probes, dtype=float).ravel())
        return float(np.max(phi ** 2 @ self.eigvals))


def _as_points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, None]
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("kernel inputs must be finite")
    return X


def _distances(X, Y):
    sq = (np.sum(X * X, 1)[:, None] + np.sum(Y * Y, 1)[None, :] - 2.0 * X @ Y.T)
    near = sq < 1e-8 * (1.0 + np.abs(sq))
    if np.any(near):
        # cancellation in the expanded form; recompute those entries exactly
        i, j = np.nonzero(near)
        sq[i, j] = np.sum((X[i] - Y[j]) ** 2, axis=1)
    return np.sqrt(np.maximum(sq, 0.0))


def eval_scalar(spec: ScalarKernelSpec, x, x2) -> float:
    """Evaluate a scalar kernel at one pair of inputs."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape or x.ndim != 1:
        raise ShapeError("kernel arguments must be vectors of equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
        raise InvalidArgumentError("kernel inputs must be finite")
    return float(spec.pairwise(x[None, :], x2[None, :])[0, 0])


def gram(spec, points) -> np.ndarray:
    """Symmetric Gram matrix of a scalar kernel on ``points``."""
    P = _as_points(points)
    if P.shape[0] < 1:
        raise InvalidArgumentError("gram needs at least one point")
    G = spec.pairwise(P, P)
    return 0.5 * (G + G.T)


# ---------------------------------------------------------------------------
# operator-valued kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Diagonal:
    """``K(x, x') = k(x, x') T`` with ``T = diag(diag_t)``."""

    scalar: object
    output_dim: int
    diag_t: np.ndarray = None

    def __post_init__(self):
        if self.output_dim < 1:
            raise InvalidArgumentError("output_dim must be positive")
        t = (np.ones(self.output_dim) if self.diag_t is None
             else np.asarray(self.diag_t, dtype=float))
        if t.shape != (self.output_dim,):
            raise ShapeError(f"diag_t must have length {self.output_dim}")
        if np.any(t <= 0):
            raise InvalidArgumentError("diag_t entries must be positive")
        object.__setattr__(self, "diag_t", t)


@dataclass(frozen=True, eq=False)
class SeparableGreen:
    """Product kernel ``k1(y, zeta) k2(x, xi)`` lifted to forcing/solution pairs.

    Inputs are forcings sampled on ``grid_x`` and outputs are solutions
    sampled on ``grid_y``.  The induced operator-valued kernel is

        K(f1, f2) g = <f1, K2 f2> * K1 g,

    where ``K1``, ``K2`` are the quadrature integral operators of ``k1`` on
    ``grid_y`` and ``k2`` on ``grid_x``.
    """

    k1: ScalarKernelSpec
    k2: ScalarKernelSpec
    grid_y: Grid1D
    grid_x: Grid1D
    _k1w: np.ndarray = field(init=False, repr=False)
    _k2w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        k1 = gram(self.k1, self.grid_y.points)
        k2 = gram(self.k2, self.grid_x.points)
        # row j of K1W is y_j -> sum_l w_l k1(y_j, zeta_l) (.)
        object.__setattr__(self, "_k1w", k1 * self.grid_y.weights[None, :])
        object.__setattr__(self, "_k2w", k2 * self.grid_x.weights[None, :])

    @property
    def output_dim(self):
        return self.grid_y.n

    def smooth_output(self, g):
        """``(K1 g)(y) = int k1(y, zeta) g(zeta) dzeta`` on ``grid_y``."""
        return np.asarray(g, dtype=float) @ self._k1w.T

    def smooth_input(self, f):
        """``(K2 f)(x) = int k2(x, xi) f(xi) dxi`` on ``grid_x``."""
        return np.asarray(f, dtype=float) @ self._k2w.T

    def k1_norm(self) -> float:
        """Operator norm of ``K1`` on L2(grid_y)."""
        sw = np.sqrt(self.grid_y.weights)
        sym = sw[:, None] * gram(self.k1, self.grid_y.points) * sw[None, :]
        return float(np.max(np.linalg.eigvalsh(sym)))


@dataclass(frozen=True, eq=False)
class ProjectedRadial:
    """``k(|x - x'|_2) P`` with inputs in R^m; the projection is applied upstream."""

    scalar: ScalarKernelSpec
    measurement_dim: int
    output_dim: int

    def __post_init__(self):
        if self.measurement_dim < 1 or self.output_dim < 1:
            raise InvalidArgumentError("dimensions must be positive")
        if not self.scalar.radial:
            raise InvalidArgumentError("ProjectedRadial requires a radial scalar kernel")


OpKernelSpec = (Diagonal, SeparableGreen, ProjectedRadial)


def input_dim(K):
    if isinstance(K, SeparableGreen):
        return K.grid_x.n
    if isinstance(K, ProjectedRadial):
        return K.measurement_dim
    return None


def _check_inputs(K, X):
    X = _as_points(X)
    d = input_dim(K)
    if d is not None and X.shape[1] != d:
        raise ShapeError(f"input dimension {X.shape[1]} does not match kernel ({d})")
    return X


def kernel_weights(K, x, centers) -> np.ndarray:
    """Scalar parts ``s(x, c)`` for each row of ``centers``, shape (len(centers),)."""
    x = _check_inputs(K, np.reshape(np.asarray(x, dtype=float), (1, -1)))
    C = _check_inputs(K, centers)
    if isinstance(K, SeparableGreen):
        w = K.grid_x.weights
        return (C @ K._k2w.T) @ (w * x[0])
    return K.scalar.pairwise(x, C)[0]


def kernel_weight_matrix(K, X, C) -> np.ndarray:
    """Scalar parts for all pairs of rows of ``X`` and ``C``."""
    X = _check_inputs(K, X)
    C = _check_inputs(K, C)
    if isinstance(K, SeparableGreen):
        return (X * K.grid_x.weights) @ (C @ K._k2w.T).T
    return K.scalar.pairwise(X, C)


def output_operator(K, y) -> np.ndarray:
    """Apply the output operator ``A`` to ``y`` (last axis)."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != K.output_dim:
        raise ShapeError(f"output dimension {y.shape[-1]} does not match kernel ({K.output_dim})")
    if isinstance(K, Diagonal):
        return y * K.diag_t
    if isinstance(K, SeparableGreen):
        return K.smooth_output(y)
    return y.copy()


def output_inner(K, u, v) -> np.ndarray:
    """Inner product of the output space (quadrature for grid outputs)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if isinstance(K, SeparableGreen):
        return np.sum(K.grid_y.weights * u * v, axis=-1)
    return np.sum(u * v, axis=-1)


def apply_opkernel(K, x, x2, y) -> np.ndarray:
    """``K(x, x2) y``."""
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    s = kernel_weights(K, x, x2[None, :])[0]
    return s * output_operator(K, y)


def kappa_sq(K, probes) -> float:
    """Largest ``||K(x, x)||`` over the probe inputs."""
    P = _check_inputs(K, probes)
    if P.shape[0] < 1:
        raise InvalidArgumentError("kappa_sq needs at least one probe")
    if isinstance(K, SeparableGreen):
        s = np.sum((P * K.grid_x.weights) * (P @ K._k2w.T), axis=1)
        return float(np.max(s) * K.k1_norm())
    if isinstance(K, ProjectedRadial):
        return float(K.scalar.profile(0.0))
    if isinstance(K.scalar, MercerKernel):
        diag = K.scalar.diagonal_sup(P)
    else:
        diag = float(np.max(np.diag(K.scalar.pairwise(P, P))))
    return diag * float(np.max(K.diag_t))


def block_quadratic_form(K, X, Y) -> float:
    """``sum_ij <K(x_i, x_j) y_j, y_i>`` for paired rows of ``X`` and ``Y``."""
    S = kernel_weight_matrix(K, X, X)
    AY = output_operator(K, Y)
    return float(np.sum(S * output_inner(K, Y[:, None, :], AY[None, :, :])))
