"""
Experiment configuration.

Configs are TOML files written with flat dotted keys, for example::

    experiment = "spectral-rate"
    seeds = 30
    output = "out/c1"
    model.N = 200
    model.s = 0.5
    schedule.mode = "finite"
    schedule.eta = 0.8
    schedule.theta = 0.5

Every key has a default; unknown keys are rejected so typos surface early.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import InvalidArgumentError

EXPERIMENTS = ("spectral-rate", "greens", "encdec", "validate")

_POW2 = [2 ** k for k in range(8, 15)]

DEFAULTS = {
    "experiment": "spectral-rate",
    "seeds": 30,
    "seed": 0,
    "output": "opkl-out",
    "model.N": 200,
    "model.s": 0.5,
    "model.r": 0.5,
    "model.m": 2,
    "model.sigma": 0.5,
    "model.seed": 0,
    "model.profile": "band",
    "schedule.mode": "finite",
    "schedule.eta": 0.8,
    "schedule.theta": 0.5,
    "spectral.regime": "pred",
    "spectral.beta": 0.2,
    "spectral.horizons": _POW2,
    "spectral.capacity_s": None,
    "fit.tmin": None,
    "fit.tmax": None,
    "fit.tolerance": 0.15,
    "kernel.variant": "diagonal",
    "kernel.family": "gaussian",
    "kernel.lengthscale": 0.2,
    "kernel.amplitude": 1.0,
    "kernel.output_dim": 1,
    "kernel.diag_t": None,
    "data.n": 65,
    "data.forward": "poisson",
    "data.sigma": 0.01,
    "data.tau": 3.0,
    "data.alpha": 2.0,
    "data.n_modes": 32,
    "data.nu": 0.025,
    "data.t_end": 1.0,
    "data.count": None,
    "greens.steps": 5000,
    "greens.heldout": 200,
    "greens.checkpoints": [100, 500, 2000, 5000],
    "greens.max_ratio": 0.5,
    "greens.min_pred_drop": 5.0,
    "encdec.reduction": "pca",
    "encdec.p": 8,
    "encdec.points": None,
    "encdec.jitter": 1e-10,
    "encdec.steps": 5000,
    "encdec.checkpoints": [100, 500, 2000, 5000],
    "encdec.min_drop": 3.0,
    "encdec.commutation": True,
    "encdec.tune_lengthscales": None,
    "encdec.tune_etas": None,
}

_CHOICES = {
    "experiment": EXPERIMENTS,
    "model.profile": ("band", "flat"),
    "schedule.mode": ("online", "finite"),
    "spectral.regime": ("pred", "est", "misspec"),
    "kernel.variant": ("diagonal", "separable-green", "projected-radial"),
    "data.forward": ("poisson", "heat"),
    "encdec.reduction": ("pca", "points"),
}


class ConfigError(InvalidArgumentError):
    """Config could not be parsed or validated; ``location`` names where."""

    def __init__(self, message: str, location: str):
        super().__init__(f"{location}: {message}")
        self.location = location


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key, value, default, source="<dict>"):
    try:
        return _coerce_value(key, value, default)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[1], f"{source}: {key}") from None


def _coerce_value(key, value, default):
    if value is None:
        return None
    if key in _CHOICES:
        if value not in _CHOICES[key]:
            raise ConfigError(f"expected one of {_CHOICES[key]}, got {value!r}", key)
        return value
    proto = default
    if isinstance(proto, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", key)
        return value
    if isinstance(proto, int) and not isinstance(proto, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key)
        return value
    if isinstance(proto, float) or proto is None and isinstance(value, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key)
        return float(value)
    if isinstance(proto, list) or proto is None and isinstance(value, list):
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", key)
        return list(value)
    if isinstance(proto, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key)
    return value


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict
    digest: str
    source: str = "<defaults>"

    def __getitem__(self, key):
        return self.values[key]

    @property
    def experiment(self) -> str:
        return self.values["experiment"]


def config_from_dict(raw: dict, text: str = "", source: str = "<dict>") -> ExperimentConfig:
    flat = _flatten(raw)
    unknown = sorted(set(flat) - set(DEFAULTS))
    if unknown:
        raise ConfigError("unknown key", f"{source}: {unknown[0]}")
    values = dict(DEFAULTS)
    for k, v in flat.items():
        values[k] = _coerce(k, v, DEFAULTS[k], source)
    if values["seeds"] < 1:
        raise ConfigError("must be >= 1", f"{source}: seeds")
    digest = hashlib.sha256(text.encode()).hexdigest()
    return ExperimentConfig(values, digest, source)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc), source) from exc
    return config_from_dict(raw, text, source)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config ({exc.strerror})", str(path)) from exc
    return parse_config(text, str(path))
