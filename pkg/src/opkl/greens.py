"""
Green's-function learning for first-kind Fredholm maps ``u = int G(., x) f(x) dx``.

With a product kernel ``k1(y, zeta) k2(x, xi)`` each SGD step adds the
rank-one term ``-eta_t (K1 r_t) (x) (K2 f_t)`` to the running Green's
function, so the learner never forms the operator-valued kernel explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as kn
from .errors import InvalidArgumentError, NumericError, ShapeError
from .fnspace import Grid1D, GridFn, make_uniform_grid
from .sgd import FiniteSchedule, record_times, step_size


def poisson_green_oracle(grid: Grid1D) -> np.ndarray:
    """``G(y, x) = min(x, y) (1 - max(x, y))`` for ``-u'' = f``, ``u(0) = u(1) = 0``."""
    if grid.a < 0 or grid.b > 1:
        raise InvalidArgumentError("Poisson oracle is defined on [0, 1]")
    x = grid.points
    return np.minimum.outer(x, x) * (1.0 - np.maximum.outer(x, x))


def _values(f, grid):
    if isinstance(f, GridFn):
        if f.grid != grid:
            raise ShapeError("function lives on a different grid")
        return f.values
    v = np.asarray(f, dtype=float)
    if v.shape[-1] != grid.n:
        raise ShapeError(f"expected {grid.n} grid values, got {v.shape[-1]}")
    return v


def apply_green(G, f, grid_x: Grid1D | None = None, grid_y: Grid1D | None = None):
    """``u(y_j) = sum_i w_i G(y_j, x_i) f(x_i)``.

    ``f`` is a :class:`GridFn` (returns a GridFn on ``grid_y``, which
    defaults to ``f.grid``) or raw values on ``grid_x`` with optional leading
    batch axes (returns raw values).
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2:
        raise ShapeError("Green's function must be a matrix")
    if isinstance(f, GridFn):
        gx = f.grid
        if G.shape[1] != gx.n:
            raise ShapeError(f"G has {G.shape[1]} columns, forcing has {gx.n} points")
        gy = grid_y if grid_y is not None else gx
        if G.shape[0] != gy.n:
            raise ShapeError(f"G has {G.shape[0]} rows, output grid has {gy.n} points")
        return GridFn(gy, G @ (gx.weights * f.values))
    if grid_x is None:
        raise InvalidArgumentError("grid_x is required for raw values")
    v = _values(f, grid_x)
    if G.shape[1] != grid_x.n:
        raise ShapeError(f"G has {G.shape[1]} columns, forcing has {grid_x.n} points")
    return (v * grid_x.weights) @ G.T


@dataclass(frozen=True, eq=False)
class GreenDataset:
    """Forcings (n, nx) on ``grid_x`` paired with solutions (n, ny) on ``grid_y``."""

    forcings: np.ndarray
    solutions: np.ndarray
    grid_x: Grid1D
    grid_y: Grid1D

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.forcings, dtype=float))
        U = np.atleast_2d(np.asarray(self.solutions, dtype=float))
        if F.shape[0] != U.shape[0]:
            raise ShapeError("forcings and solutions must have equal counts")
        if F.shape[1] != self.grid_x.n or U.shape[1] != self.grid_y.n:
            raise ShapeError("sample lengths do not match the grids")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(U))):
            raise InvalidArgumentError("dataset values must be finite")
        object.__setattr__(self, "forcings", F)
        object.__setattr__(self, "solutions", U)

    @classmethod
    def from_gridfns(cls, forcings, solutions):
        forcings, solutions = list(forcings), list(solutions)
        if not forcings:
            raise InvalidArgumentError("empty dataset")
        gx, gy = forcings[0].grid, solutions[0].grid
        if any(f.grid != gx for f in forcings) or any(u.grid != gy for u in solutions):
            raise ShapeError("all forcings (solutions) must share one grid")
        return cls(np.array([f.values for f in forcings]),
                   np.array([u.values for u in solutions]), gx, gy)

    def __len__(self):
        return self.forcings.shape[0]


@dataclass(frozen=True, eq=False)
class GreenTerm:
    eta: float
    k1r: np.ndarray
    k2f: np.ndarray


@dataclass(frozen=True, eq=False)
class GreenEstimate:
    """Rank-one terms of ``G_t`` and their running sum ``assembled``."""

    terms: tuple
    assembled: np.ndarray

    @classmethod
    def zero(cls, K: kn.SeparableGreen) -> "GreenEstimate":
        return cls((), np.zeros((K.grid_y.n, K.grid_x.n)))

    @property
    def step_count(self) -> int:
        return len(self.terms)

    def reassemble(self) -> np.ndarray:
        """Sum of the stored terms, computed from scratch."""
        G = np.zeros_like(self.assembled)
        for term in self.terms:
            G -= term.eta * np.outer(term.k1r, term.k2f)
        return G

    def predict(self, K: kn.SeparableGreen, f):
        return apply_green(self.assembled, f, K.grid_x, K.grid_y)


def _term(est, K, eta, f, u):
    r = apply_green(est.assembled, f, K.grid_x, K.grid_y) - u
    if not np.all(np.isfinite(r)):
        raise NumericError("non-finite residual")
    return GreenTerm(eta, K.smooth_output(r), K.smooth_input(f)), r


def green_sgd_step(est: GreenEstimate, K: kn.SeparableGreen, sched, t: int, sample) -> GreenEstimate:
    """``G_{t+1} = G_t - eta_t (K1 r_t) (x) (K2 f_t)`` with ``r_t = G_t f_t - u_t``."""
    f = _values(sample[0], K.grid_x)
    u = _values(sample[1], K.grid_y)
    term, _ = _term(est, K, step_size(sched, t), f, u)
    G = est.assembled - term.eta * np.outer(term.k1r, term.k2f)
    return GreenEstimate(est.terms + (term,), G)


def weighted_frobenius(G, grid_y: Grid1D, grid_x: Grid1D) -> float:
    """Hilbert-Schmidt norm of the quadrature integral operator with kernel ``G``."""
    G = np.asarray(G, dtype=float)
    return float(np.sqrt(np.einsum("ij,i,j->", G * G, grid_y.weights, grid_x.weights)))


def run_green(data: GreenDataset, K: kn.SeparableGreen, sched, truth_g=None,
              metrics_every: int = 100, heldout=None, trial: int = 0, checkpoints=None):
    """Single pass of Green's-function SGD.

    ``heldout`` is an optional pair ``(forcings, clean solutions)``; when it
    is absent ``pred_err`` is NaN.  Rows are recorded after ``t`` samples for
    ``t`` in ``record_times(T, metrics_every)`` unioned with ``checkpoints``.

    Returns the final estimate and rows with keys
    ``trial, t, train_res, pred_err, green_rel_err``.  ``train_res`` is the
    L2 residual of the current iterate on the latest sample; ``pred_err`` is
    the mean squared L2 error on ``heldout``.
    """
    T = len(data)
    if T == 0:
        raise InvalidArgumentError("dataset is empty")
    if data.grid_x != K.grid_x or data.grid_y != K.grid_y:
        raise ShapeError("dataset grids differ from the kernel grids")
    if isinstance(sched, FiniteSchedule):
        if T < sched.horizon:
            raise InvalidArgumentError(f"dataset has {T} samples, horizon is {sched.horizon}")
        T = sched.horizon
    times = set(record_times(T, metrics_every)) | set(checkpoints or ())
    wy = K.grid_y.weights
    truth_norm = None
    if truth_g is not None:
        truth_g = np.asarray(truth_g, dtype=float)
        if truth_g.shape != (K.grid_y.n, K.grid_x.n):
            raise ShapeError("truth_g shape does not match the kernel grids")
        truth_norm = weighted_frobenius(truth_g, K.grid_y, K.grid_x)

    terms = []
    G = np.zeros((K.grid_y.n, K.grid_x.n))
    rows = []

    def record(t):
        i = max(t - 1, 0)
        r = apply_green(G, data.forcings[i], K.grid_x, K.grid_y) - data.solutions[i]
        row = {"trial": trial, "t": t, "train_res": float(np.sqrt(np.sum(wy * r * r)))}
        if heldout is not None:
            P = apply_green(G, heldout[0], K.grid_x, K.grid_y) - heldout[1]
            row["pred_err"] = float(np.mean((P * P) @ wy))
        else:
            row["pred_err"] = float("nan")
        if truth_norm is not None and truth_norm > 0:
            row["green_rel_err"] = weighted_frobenius(G - truth_g, K.grid_y, K.grid_x) / truth_norm
        elif truth_norm is not None:
            row["green_rel_err"] = weighted_frobenius(G, K.grid_y, K.grid_x)
        else:
            row["green_rel_err"] = float("nan")
        rows.append(row)

    if 0 in times:
        record(0)
    for t in range(1, T + 1):
        est = GreenEstimate((), G)
        term, _ = _term(est, K, step_size(sched, t), data.forcings[t - 1], data.solutions[t - 1])
        terms.append(term)
        G = G - term.eta * np.outer(term.k1r, term.k2f)
        if t in times:
            record(t)
    return GreenEstimate(tuple(terms), G), rows


# ---------------------------------------------------------------------------
# structure of the induced RKHS
# ---------------------------------------------------------------------------


def _random_fns(rng, grid, count):
    # smooth random functions: a few random Fourier modes on the grid
    x = (grid.points - grid.a) / (grid.b - grid.a)
    k = np.arange(1, 6)
    A = rng.standard_normal((count, k.size)) / k
    B = rng.standard_normal((count, k.size)) / k
    return (A @ np.sin(np.pi * np.outer(k, x)) + B @ np.cos(np.pi * np.outer(k, x))
            + rng.standard_normal((count, 1)))


def _opk(K, f1, f2, g):
    """``K(f1, f2) g = <f1, K2 f2> K1 g``."""
    s = np.sum(K.grid_x.weights * f1 * K.smooth_input(f2))
    return s * K.smooth_output(g)


def reproducing_check(K: kn.SeparableGreen, n_probes: int = 5, n_terms: int = 3,
                      seed: int = 0) -> float:
    """Reproducing property ``<K(., f) g, h_G>_K = <h_G(f), g>``.

    ``h_G = sum_i alpha_i K(., f_i) g_i``.  The left side is evaluated with
    Gram algebra on the coefficients, the right side by applying the
    assembled Green's function of ``h_G`` to ``f`` and integrating against
    ``g`` by quadrature.  Returns the largest discrepancy relative to the
    magnitude of the left side.
    """
    if n_probes < 1:
        raise InvalidArgumentError("n_probes must be >= 1")
    rng = np.random.default_rng(seed)
    wy = K.grid_y.weights
    F = _random_fns(rng, K.grid_x, n_terms)
    Gs = _random_fns(rng, K.grid_y, n_terms)
    alpha = rng.standard_normal(n_terms)
    green = sum(a * np.outer(K.smooth_output(g), K.smooth_input(f))
                for a, f, g in zip(alpha, F, Gs))
    worst = 0.0
    for f, g in zip(_random_fns(rng, K.grid_x, n_probes), _random_fns(rng, K.grid_y, n_probes)):
        lhs = sum(a * np.sum(wy * _opk(K, fi, f, g) * gi) for a, fi, gi in zip(alpha, F, Gs))
        rhs = np.sum(wy * apply_green(green, f, K.grid_x, K.grid_y) * g)
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1.0))
    return float(worst)


def isometry_check(K: kn.SeparableGreen, n_terms: int = 4, seed: int = 0) -> float:
    """Compare ``<h_F, h_G>_K`` with ``<F, G>_k`` for scalar kernel sections.

    ``F = sum_i alpha_i k((., .), (y_i, x_i))`` with grid nodes ``(y_i, x_i)``
    corresponds to ``h_F = sum_i alpha_i K(., d_{x_i}) d_{y_i}`` where ``d``
    are quadrature deltas.  Returns the relative difference of the two
    bilinear forms.
    """
    rng = np.random.default_rng(seed)
    gx, gy = K.grid_x, K.grid_y
    iy = rng.integers(1, gy.n - 1, size=(2, n_terms))
    ix = rng.integers(1, gx.n - 1, size=(2, n_terms))
    al = rng.standard_normal((2, n_terms))

    def delta(grid, i):
        d = np.zeros(grid.n)
        d[i] = 1.0 / grid.weights[i]
        return d

    py = gy.points
    px = gx.points
    k_form = 0.0
    K_form = 0.0
    for i in range(n_terms):
        for j in range(n_terms):
            c = al[0, i] * al[1, j]
            k_form += c * (kn.eval_scalar(K.k1, py[iy[0, i]], py[iy[1, j]])
                           * kn.eval_scalar(K.k2, px[ix[0, i]], px[ix[1, j]]))
            fi, gi = delta(gx, ix[0, i]), delta(gy, iy[0, i])
            fj, gj = delta(gx, ix[1, j]), delta(gy, iy[1, j])
            K_form += c * np.sum(gy.weights * _opk(K, fj, fi, gi) * gj)
    return float(abs(K_form - k_form) / max(abs(k_form), 1e-300))


def psd_check(K: kn.SeparableGreen, n_batches: int = 50, batch_size: int = 6,
              seed: int = 0) -> float:
    """Smallest ``sum_ij <K(f_i, f_j) g_j, g_i>`` over random batches, relative to its trace."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(n_batches):
        F = _random_fns(rng, K.grid_x, batch_size)
        Gs = _random_fns(rng, K.grid_y, batch_size)
        q = kn.block_quadratic_form(K, F, Gs)
        diag = sum(np.sum(K.grid_y.weights * _opk(K, f, f, g) * g) for f, g in zip(F, Gs))
        worst = min(worst, q / diag)
    return float(worst)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def write_green_csv(G, path, grid_y: Grid1D, grid_x: Grid1D) -> None:
    G = np.asarray(G, dtype=float)
    if G.shape != (grid_y.n, grid_x.n):
        raise ShapeError("matrix shape does not match the grids")
    lines = [f"# gridY={grid_y.n} gridX={grid_x.n} domain=[{grid_x.a:g},{grid_x.b:g}]"]
    lines += [",".join(repr(float(v)) for v in row) for row in G]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_green_csv(path):
    """Returns ``(G, grid_y, grid_x)``; grids are uniform trapezoid grids."""
    with open(path) as fh:
        header = fh.readline().strip()
        fields = dict(tok.split("=", 1) for tok in header.lstrip("#").split())
        try:
            ny, nx = int(fields["gridY"]), int(fields["gridX"])
            a, b = (float(v) for v in fields["domain"].strip("[]").split(","))
        except (KeyError, ValueError) as exc:
            raise InvalidArgumentError(f"malformed Green CSV header: {header!r}") from exc
        G = np.loadtxt(fh, delimiter=",", ndmin=2)
    if G.shape != (ny, nx):
        raise ShapeError(f"header declares {ny}x{nx}, body is {G.shape}")
    return G, make_uniform_grid(ny, a, b), make_uniform_grid(nx, a, b)
