"""
Synthetic operator-learning data.

Inputs are periodic Gaussian random fields on [a, b] sampled through a
truncated Karhunen-Loeve expansion in the real Fourier basis.  Outputs come
from an analytic forward map (Poisson Green's function, periodic heat
semigroup, or any supplied Green's matrix) plus white noise on the grid.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidArgumentError, ShapeError
from .fnspace import Grid1D, GridFn, make_uniform_grid
from .greens import apply_green, poisson_green_oracle


@dataclass(frozen=True)
class GpSpec:
    """Covariance ``(-Laplacian + tau^2)^(-alpha)`` on the periodic interval."""

    tau: float = 3.0
    alpha: float = 2.0
    n_modes: int = 32

    def __post_init__(self):
        if not (self.tau > 0 and self.alpha > 0):
            raise InvalidArgumentError("tau and alpha must be positive")
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise InvalidArgumentError("n_modes must be a positive integer")

    def eigvals(self, length: float = 1.0) -> np.ndarray:
        """``[mu_0, mu_1, mu_1, mu_2, mu_2, ...]`` matching :func:`fourier_basis`."""
        k = np.arange(1, self.n_modes + 1, dtype=float)
        mu = ((2 * np.pi * k / length) ** 2 + self.tau ** 2) ** (-self.alpha)
        return np.concatenate([[self.tau ** (-2 * self.alpha)], np.repeat(mu, 2)])


@dataclass(frozen=True)
class NoiseSpec:
    """Output noise with ``E ||eps||_{L2}^2 = sigma^2``."""

    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise InvalidArgumentError("sigma must be nonnegative")


def fourier_basis(grid: Grid1D, n_modes: int) -> np.ndarray:
    """Rows ``1, sqrt2 cos(2 pi k x), sqrt2 sin(2 pi k x)`` (k = 1..n_modes), L2-normalized."""
    L = grid.b - grid.a
    x = (grid.points - grid.a) / L
    k = np.arange(1, n_modes + 1)
    arg = 2 * np.pi * np.outer(k, x)
    rows = np.empty((2 * n_modes + 1, grid.n))
    rows[0] = 1.0
    rows[1::2] = np.sqrt(2.0) * np.cos(arg)
    rows[2::2] = np.sqrt(2.0) * np.sin(arg)
    return rows / np.sqrt(L)


def sample_gp_batch(spec: GpSpec, grid: Grid1D, rng, count: int) -> np.ndarray:
    """``count`` independent draws as an array of shape (count, grid.n)."""
    lam = spec.eigvals(grid.b - grid.a)
    z = rng.standard_normal((count, lam.size))
    return (z * np.sqrt(lam)) @ fourier_basis(grid, spec.n_modes)


def sample_gp(spec: GpSpec, grid: Grid1D, rng) -> GridFn:
    return GridFn(grid, sample_gp_batch(spec, grid, rng, 1)[0])


def heat_forward(f, nu: float, t_end: float, grid: Grid1D | None = None):
    """Periodic heat semigroup ``exp(t_end nu d^2/dx^2)`` as a Fourier multiplier.

    The grid must be uniform with its last point identified with the first;
    the transform uses the first ``n - 1`` points and the endpoint is
    re-appended.  Accepts a :class:`GridFn` or raw values (batched along
    leading axes) together with ``grid``.
    """
    if not (nu > 0 and t_end > 0):
        raise InvalidArgumentError("nu and t_end must be positive")
    if isinstance(f, GridFn):
        return GridFn(f.grid, heat_forward(f.values, nu, t_end, f.grid))
    if grid is None:
        raise InvalidArgumentError("grid is required for raw values")
    v = np.asarray(f, dtype=float)
    if v.shape[-1] != grid.n:
        raise ShapeError(f"expected {grid.n} values, got {v.shape[-1]}")
    if grid.n < 3:
        raise InvalidArgumentError("heat_forward needs at least 3 grid points")
    n = grid.n - 1
    k = np.fft.rfftfreq(n, d=1.0 / n)
    L = grid.b - grid.a
    mult = np.exp(-nu * (2 * np.pi * k / L) ** 2 * t_end)
    out = np.fft.irfft(np.fft.rfft(v[..., :n], axis=-1) * mult, n=n, axis=-1)
    return np.concatenate([out, out[..., :1]], axis=-1)


# ---------------------------------------------------------------------------
# forward maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoissonForward:
    """``-u'' = f`` with homogeneous Dirichlet conditions on [0, 1]."""

    name = "poisson"

    def __call__(self, F, grid: Grid1D):
        return apply_green(poisson_green_oracle(grid), F, grid, grid)

    def to_dict(self):
        return {"name": self.name}


@dataclass(frozen=True)
class HeatForward:
    nu: float = 0.025
    t_end: float = 1.0
    name = "heat"

    def __call__(self, F, grid: Grid1D):
        return heat_forward(F, self.nu, self.t_end, grid)

    def to_dict(self):
        return {"name": self.name, "nu": self.nu, "t_end": self.t_end}


@dataclass(frozen=True, eq=False)
class GreenForward:
    """Arbitrary Fredholm kernel ``G(y_j, x_i)`` on a shared grid."""

    matrix: np.ndarray
    name = "custom-green"

    def __call__(self, F, grid: Grid1D):
        G = np.asarray(self.matrix, dtype=float)
        if G.shape != (grid.n, grid.n):
            raise ShapeError("Green's matrix does not match the grid")
        return apply_green(G, F, grid, grid)

    def to_dict(self):
        return {"name": self.name, "shape": list(np.shape(self.matrix))}


def forward_from_dict(d: dict):
    name = d.get("name")
    if name == "poisson":
        return PoissonForward()
    if name == "heat":
        return HeatForward(float(d.get("nu", 0.025)), float(d.get("t_end", 1.0)))
    raise InvalidArgumentError(f"cannot rebuild forward map {name!r}")


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

SPLIT = (0.7, 0.15, 0.15)


@dataclass(frozen=True, eq=False)
class FunctionDataset:
    """Paired function samples with a train/val/test split.

    ``inputs``, ``outputs`` (noisy) and ``clean`` have shape (count, grid.n);
    ``splits`` maps ``"train"``, ``"val"``, ``"test"`` to index arrays.
    """

    grid: Grid1D
    inputs: np.ndarray
    outputs: np.ndarray
    clean: np.ndarray
    splits: dict
    meta: dict

    def __len__(self):
        return self.inputs.shape[0]

    def part(self, name: str):
        """``(inputs, outputs, clean)`` rows of one split, in split order."""
        idx = self.splits[name]
        return self.inputs[idx], self.outputs[idx], self.clean[idx]


def split_indices(count: int, rng) -> dict:
    perm = rng.permutation(count)
    n_tr = int(round(SPLIT[0] * count))
    n_va = int(round(SPLIT[1] * count))
    return {"train": perm[:n_tr], "val": perm[n_tr:n_tr + n_va], "test": perm[n_tr + n_va:]}


def white_noise(noise: NoiseSpec, grid: Grid1D, rng, count: int) -> np.ndarray:
    # per-point std sigma/sqrt(b - a) gives E||eps||^2 = sigma^2 under the weights
    return rng.standard_normal((count, grid.n)) * (noise.sigma / np.sqrt(grid.b - grid.a))


def make_dataset(forward, gp: GpSpec, noise: NoiseSpec, count: int, grid: Grid1D,
                 seed: int = 0) -> FunctionDataset:
    """Draw ``count`` i.i.d. pairs ``(f_i, forward(f_i) + eps_i)`` and split them."""
    if int(count) != count or count < 10:
        raise InvalidArgumentError("count must be an integer >= 10")
    count = int(count)
    F = sample_gp_batch(gp, grid, np.random.default_rng([seed, 0]), count)
    U = np.asarray(forward(F, grid), dtype=float)
    eps = white_noise(noise, grid, np.random.default_rng([seed, 1]), count)
    splits = split_indices(count, np.random.default_rng([seed, 2]))
    meta = {"seed": int(seed), "count": count, "gp": asdict(gp), "noise": asdict(noise),
            "forward": forward.to_dict(),
            "grid": {"n": grid.n, "a": grid.a, "b": grid.b}}
    return FunctionDataset(grid, F, U + eps, U, splits, meta)


_FILES = ("inputs", "outputs", "clean")


def save_dataset(ds: FunctionDataset, directory) -> None:
    """CSV bundle: one row-major file per field plus ``manifest.json``."""
    os.makedirs(directory, exist_ok=True)
    for name in _FILES:
        arr = getattr(ds, name)
        with open(os.path.join(directory, f"{name}.csv"), "w") as fh:
            fh.write("\n".join(",".join(repr(float(v)) for v in row) for row in arr) + "\n")
    manifest = dict(ds.meta)
    manifest["splits"] = {k: [int(i) for i in v] for k, v in ds.splits.items()}
    manifest["files"] = [f"{n}.csv" for n in _FILES]
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(directory) -> FunctionDataset:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    g = manifest["grid"]
    grid = make_uniform_grid(int(g["n"]), float(g["a"]), float(g["b"]))
    arrs = [np.loadtxt(os.path.join(directory, f"{n}.csv"), delimiter=",", ndmin=2)
            for n in _FILES]
    if any(a.shape != (manifest["count"], grid.n) for a in arrs):
        raise ShapeError("bundle arrays do not match the manifest")
    splits = {k: np.asarray(v, dtype=int) for k, v in manifest.pop("splits").items()}
    manifest.pop("files", None)
    return FunctionDataset(grid, *arrs, splits, manifest)
