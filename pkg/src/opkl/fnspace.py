"""Uniform grids, trapezoid quadrature and L2 inner products on intervals."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, ShapeError


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Composite-trapezoid grid on ``[a, b]``.

    Two grids compare equal when they share ``(n, a, b)``; they are never
    interpolated onto one another.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if p.ndim != 1 or p.shape != w.shape:
            raise ShapeError("points and weights must be 1-D of equal length")
        if p.size < 2 or np.any(np.diff(p) <= 0):
            raise InvalidArgumentError("grid points must be strictly ascending")
        if np.any(w < 0):
            raise InvalidArgumentError("quadrature weights must be nonnegative")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.size

    @property
    def a(self) -> float:
        return float(self.points[0])

    @property
    def b(self) -> float:
        return float(self.points[-1])

    @property
    def key(self):
        return (self.n, self.a, self.b)

    def __eq__(self, other):
        if not isinstance(other, Grid1D):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __len__(self):
        return self.n


@dataclass(frozen=True, eq=False)
class GridFn:
    """A function sampled on a :class:`Grid1D`."""

    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ShapeError(
                f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("GridFn values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid1D, fn) -> "GridFn":
        return cls(grid, fn(grid.points))

    def __add__(self, other):
        _check_same_grid(self, other)
        return GridFn(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return GridFn(self.grid, self.values - other.values)

    def __mul__(self, c):
        return GridFn(self.grid, float(c) * self.values)

    __rmul__ = __mul__


def make_uniform_grid(n: int, a: float = 0.0, b: float = 1.0) -> Grid1D:
    """Trapezoid grid with ``n`` equispaced points on ``[a, b]``."""
    if int(n) != n or n < 2:
        raise InvalidArgumentError(f"need n >= 2 grid points, got {n}")
    if not a < b:
        raise InvalidArgumentError(f"need a < b, got [{a}, {b}]")
    n = int(n)
    h = (b - a) / (n - 1)
    points = a + h * np.arange(n)
    points[-1] = b
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    return Grid1D(points, weights)


def _check_same_grid(f: GridFn, g: GridFn):
    if f.grid != g.grid:
        raise ShapeError(f"grid mismatch: {f.grid.key} vs {g.grid.key}")


def inner(f: GridFn, g: GridFn) -> float:
    """Quadrature approximation of the L2 inner product."""
    _check_same_grid(f, g)
    return float(np.sum(f.grid.weights * f.values * g.values))


def norm(f: GridFn) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


def weighted_inner(w: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Batched quadrature inner product over the last axis."""
    return np.sum(w * u * v, axis=-1)


def write_gridfn_csv(f: GridFn, path) -> None:
    """Write ``f`` as ``x,value`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "value"])
        for x, v in zip(f.grid.points, f.values):
            writer.writerow([repr(float(x)), repr(float(v))])


def read_gridfn_csv(path) -> GridFn:
    """Read a file written by :func:`write_gridfn_csv`.

    The grid is rebuilt as a uniform trapezoid grid from the first and last
    abscissae and checked against the stored points.
    """
    rows = Path(path).read_text().strip().splitlines()
    if not rows or rows[0].strip() != "x,value":
        raise InvalidArgumentError(f"{path}: expected header 'x,value'")
    data = np.array([[float(c) for c in r.split(",")] for r in rows[1:]])
    grid = make_uniform_grid(len(data), data[0, 0], data[-1, 0])
    if not np.allclose(grid.points, data[:, 0], rtol=0, atol=1e-12):
        raise InvalidArgumentError(f"{path}: abscissae are not uniform")
    return GridFn(grid, data[:, 1])
