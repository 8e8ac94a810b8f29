"""
Single-pass stochastic approximation in a vector-valued RKHS.

The iterate after ``t`` steps is the kernel expansion

    h_{t+1}(x) = sum_{s <= t} K(x, x_s) c_s,    c_s = -eta_s (h_s(x_s) - y_s),

which represents the recursion ``h_{t+1} = h_t - eta_t K(., x_t)(h_t(x_t) - y_t)``
exactly for any operator-valued kernel without discretizing the RKHS.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import kernels as kn
from .errors import InvalidArgumentError, NumericError, ShapeError, StepSizeWarning


@dataclass(frozen=True)
class OnlineSchedule:
    """``eta_t = eta1 * t**(-theta)``; horizon unknown."""

    eta1: float
    theta: float

    def __post_init__(self):
        _check_exponent(self.theta, "theta")
        if self.eta1 < 0:
            raise InvalidArgumentError("eta1 must be nonnegative")


@dataclass(frozen=True)
class FiniteSchedule:
    """Constant ``eta_t = eta * horizon**(-theta_prime)`` for ``t <= horizon``."""

    eta: float
    theta_prime: float
    horizon: int

    def __post_init__(self):
        _check_exponent(self.theta_prime, "theta_prime")
        if self.eta < 0:
            raise InvalidArgumentError("eta must be nonnegative")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidArgumentError("horizon must be a positive integer")


StepSchedule = (OnlineSchedule, FiniteSchedule)


def _check_exponent(v, name):
    if not 0.0 < v < 1.0:
        raise InvalidArgumentError(f"{name} must lie strictly inside (0, 1), got {v}")


def step_size(sched, t: int) -> float:
    if t < 1:
        raise InvalidArgumentError(f"step index must be >= 1, got {t}")
    if isinstance(sched, OnlineSchedule):
        return sched.eta1 * float(t) ** (-sched.theta)
    if t > sched.horizon:
        raise InvalidArgumentError(f"step {t} beyond horizon {sched.horizon}")
    return sched.eta * float(sched.horizon) ** (-sched.theta_prime)


def step_sizes(sched, T: int) -> np.ndarray:
    """``eta_1, ..., eta_T`` as an array."""
    if isinstance(sched, FiniteSchedule):
        if T > sched.horizon:
            raise InvalidArgumentError(f"{T} steps requested beyond horizon {sched.horizon}")
        return np.full(T, step_size(sched, 1))
    return sched.eta1 * np.arange(1, T + 1, dtype=float) ** (-sched.theta)


class ScheduleBounds(NamedTuple):
    gamma: float
    max_step: float


def schedule_bounds(kappa_sq: float, theta: float, trace_lks: float = 1.0,
                    s: float = 1.0, delta: float = 1.0, mode: str = "online",
                    capacity: bool = False, lk_norm: float | None = None) -> ScheduleBounds:
    """Advisory step-size constants.

    ``mode`` selects the decaying (``"online"``) or constant (``"finite"``)
    regime and ``capacity`` selects the trace-condition variant.  Without
    ``capacity`` the constants are ``gamma_1`` / ``gamma_1'``; with it they are
    ``gamma_2`` / ``gamma_2'``.  The operator norm of the integral operator is
    proxied by ``kappa_sq`` unless ``lk_norm`` is given.  ``max_step`` is the
    admissible upper limit for ``eta1`` (online) or ``eta`` (finite).
    """
    k2 = float(kappa_sq)
    if k2 <= 0 or theta <= 0:
        raise InvalidArgumentError("kappa_sq and theta must be positive")
    if not 0.0 <= s <= 1.0:
        raise InvalidArgumentError("s must lie in [0, 1]")
    lk = k2 if lk_norm is None else float(lk_norm)
    if not capacity:
        if mode == "online":
            gamma = theta / (4 * k2 * (1 + 2 * k2) * (delta + 1))
        else:
            gamma = theta / (4 * k2 * (1 + 2 * k2) * (1 + 2 * theta))
    else:
        common = k2 * trace_lks * (1 + k2 ** (1 - s))
        if mode == "online":
            if s < 1:
                gamma = (1 - s) / (8 * common * (delta + 1))
            elif theta > 0.5:
                gamma = (2 * theta - 1) / (16 * common * (delta + 1) * theta)
            else:
                raise InvalidArgumentError("s = 1 requires theta > 1/2")
        else:
            gamma = s / (16 * common * (s + 1))
    cap = (1.0 - theta) if mode == "online" else 1.0
    return ScheduleBounds(gamma, min(1.0 / lk, cap, gamma))


@dataclass(frozen=True, eq=False)
class IterateState:
    """Kernel-expansion iterate; the empty state is ``h_1 = 0``."""

    centers: np.ndarray
    coeffs: np.ndarray

    @property
    def step_count(self) -> int:
        return self.centers.shape[0]

    @classmethod
    def empty(cls, input_dim: int, output_dim: int) -> "IterateState":
        return cls(np.zeros((0, input_dim)), np.zeros((0, output_dim)))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Paired samples; ``inputs`` has shape (n, d), ``outputs`` (n, m)."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        Y = np.asarray(self.outputs, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise ShapeError("inputs and outputs must have equal counts")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InvalidArgumentError("dataset values must be finite")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outputs", Y)

    def __len__(self):
        return self.inputs.shape[0]


def predict(state: IterateState, K, x) -> np.ndarray:
    """Evaluate the iterate at one input."""
    if state.step_count == 0:
        return np.zeros(K.output_dim)
    if state.coeffs.shape[1] != K.output_dim:
        raise ShapeError("iterate coefficients do not match kernel output dimension")
    w = kn.kernel_weights(K, x, state.centers)
    return kn.output_operator(K, w @ state.coeffs)


def predict_many(state: IterateState, K, X) -> np.ndarray:
    """Evaluate the iterate at each row of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if state.step_count == 0:
        return np.zeros((X.shape[0], K.output_dim))
    W = kn.kernel_weight_matrix(K, X, state.centers)
    return kn.output_operator(K, W @ state.coeffs)


def _coefficient(pred, y, eta):
    resid = pred - y
    if not np.all(np.isfinite(resid)):
        raise NumericError("non-finite residual")
    return -eta * resid, resid


def sgd_step(state: IterateState, K, sched, sample) -> IterateState:
    """One stochastic approximation step; returns a new state."""
    x, y = sample
    x = np.reshape(np.asarray(x, dtype=float), (1, -1))
    y = np.asarray(y, dtype=float).ravel()
    if y.size != K.output_dim:
        raise ShapeError(f"output has {y.size} entries, kernel expects {K.output_dim}")
    t = state.step_count + 1
    centers = state.centers if state.step_count else np.zeros((0, x.shape[1]))
    if centers.shape[1] != x.shape[1]:
        raise ShapeError("sample input dimension differs from stored centres")
    c, _ = _coefficient(predict(state, K, x[0]), y, step_size(sched, t))
    return IterateState(np.vstack([centers, x]), np.vstack([state.coeffs.reshape(-1, y.size), c]))


class _Expansion:
    """Growable buffer behind :func:`run`; avoids quadratic copying."""

    def __init__(self, T, d, m):
        self.centers = np.empty((T, d))
        self.coeffs = np.empty((T, m))
        self.n = 0

    def add(self, x, c):
        self.centers[self.n] = x
        self.coeffs[self.n] = c
        self.n += 1

    def state(self) -> IterateState:
        return IterateState(self.centers[: self.n].copy(), self.coeffs[: self.n].copy())

    def view(self) -> IterateState:
        return IterateState(self.centers[: self.n], self.coeffs[: self.n])


MetricFn = Callable[[IterateState, int], dict]


def record_times(T: int, every: int) -> list[int]:
    """Checkpoints ``0, every, 2 every, ..., T`` (samples consumed)."""
    if every < 1:
        raise InvalidArgumentError("metrics_every must be >= 1")
    ts = list(range(0, T + 1, every))
    if ts[-1] != T:
        ts.append(T)
    return ts


def run(data: Dataset, K, sched, metrics_every: int = 1,
        metric_fns: Sequence[MetricFn] = (), trial: int = 0, checkpoints=()):
    """Single pass over ``data`` in order.

    Returns the final state and a list of metric rows.  Row ``t`` describes
    the iterate after ``t`` samples (``t = 0`` is ``h_1 = 0``).  Columns are
    ``trial``, ``t``, ``step_size`` (last step applied, 0 at ``t = 0``),
    ``train_residual`` (Euclidean/L2 norm of the residual of the current
    iterate at the most recent sample; at ``t = 0`` the first sample) and
    whatever the ``metric_fns`` return.  Extra ``checkpoints`` are merged
    into the recording times.
    """
    T = len(data)
    if T == 0:
        raise InvalidArgumentError("dataset is empty")
    if isinstance(sched, FiniteSchedule) and T < sched.horizon:
        raise InvalidArgumentError(f"dataset has {T} samples, horizon is {sched.horizon}")
    if isinstance(sched, FiniteSchedule):
        T = sched.horizon
    X, Y = data.inputs, data.outputs
    probes = X[: min(T, 64)]
    eta_first = step_size(sched, 1)
    k2 = kn.kappa_sq(K, probes)
    if eta_first * k2 >= 1.0:
        warnings.warn(f"eta_1 * kappa^2 = {eta_first * k2:.3g} >= 1", StepSizeWarning,
                      stacklevel=2)

    buf = _Expansion(T, X.shape[1], K.output_dim)
    times = set(record_times(T, metrics_every)) | {t for t in checkpoints if 0 < t <= T}
    rows = []

    def residual_norm(i):
        st = buf.view()
        pred = predict(st, K, X[i])
        return float(np.sqrt(kn.output_inner(K, pred - Y[i], pred - Y[i])))

    def record(t, eta):
        st = buf.view()
        row = {"trial": trial, "t": t, "step_size": eta,
               "train_residual": residual_norm(max(t - 1, 0))}
        for fn in metric_fns:
            row.update(fn(st, t))
        rows.append(row)

    record(0, 0.0)
    for t in range(1, T + 1):
        eta = step_size(sched, t)
        c, _ = _coefficient(predict(buf.view(), K, X[t - 1]), Y[t - 1], eta)
        buf.add(X[t - 1], c)
        if t in times:
            record(t, eta)
    return buf.state(), rows
