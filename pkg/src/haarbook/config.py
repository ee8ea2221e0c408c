"""Run configuration: a YAML key-value file plus command-line overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .ltgroup import TriMatrix
from .predictive import KERNEL_NAMES

MIN_BUDGET = 1000


class ConfigError(ValueError):
    pass


def default_thetas(p: int) -> list[list[float]]:
    """Fixture list: identity, mild and ill-conditioned diagonals, two dense factors."""
    eye = np.eye(p)
    mild = np.diag(np.linspace(1.0, 2.0, p)) if p > 1 else np.array([[2.0]])
    # condition number of theta theta' is 1e4
    stiff = np.diag(np.geomspace(1.0, 100.0, p)) if p > 1 else np.array([[100.0]])
    dense = np.diag(np.linspace(1.0, 2.0, p)) + np.tril(np.full((p, p), 0.5), -1)
    rng = np.random.default_rng(20240607)
    rand = np.tril(rng.standard_normal((p, p)), -1) + np.diag(np.exp(rng.normal(0.0, 0.5, p)))
    return [m[np.tril_indices(p)].tolist() for m in (eye, mild, dense, stiff, rand)]


@dataclass
class RunConfig:
    p: int = 2
    n: int = 3
    kernel: str = "jeffreys"
    beta: float | None = None
    seed: int = 42
    budget: int = 200_000
    rounds: int = 100_000
    thetas: list[list[float]] | None = None
    out: str | None = None
    csv: str | None = None
    threads: int = 1
    theta_list: list[TriMatrix] = field(init=False, repr=False, default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (isinstance(self.p, int) and self.p >= 1):
            raise ConfigError(f"p must be a positive integer, got {self.p!r}")
        if not (isinstance(self.n, int) and self.n >= self.p):
            raise ConfigError(f"need n >= p, got n={self.n!r}, p={self.p}")
        if self.kernel not in KERNEL_NAMES:
            raise ConfigError(f"kernel must be one of {', '.join(KERNEL_NAMES)}, got {self.kernel!r}")
        if self.kernel == "beta":
            if self.beta is None:
                raise ConfigError("kernel 'beta' needs --beta")
            limit = (self.n - self.p + 1) / 2
            if not float(self.beta) < limit:
                raise ConfigError(
                    f"improper posterior: beta={self.beta} violates β < (n−p+1)/2 = {limit:g}"
                )
        if self.budget < MIN_BUDGET:
            raise ConfigError(f"budget must be >= {MIN_BUDGET}, got {self.budget}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        raw = self.thetas if self.thetas is not None else default_thetas(self.p)
        try:
            self.theta_list = [TriMatrix(self.p, t) for t in raw]
        except ValueError as exc:
            raise ConfigError(f"bad theta fixture: {exc}") from None
        if not self.theta_list:
            raise ConfigError("theta fixture list is empty")

    def kernel_spec(self) -> str:
        return f"beta({self.beta})" if self.kernel == "beta" else self.kernel

    def echo(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.init}
        d["thetas"] = [t.entries.tolist() for t in self.theta_list]
        return d


def load_config_file(path: str | Path) -> dict:
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold key: value pairs")
    return data


def load_theta_file(path: str | Path) -> list[list[float]]:
    """A JSON or YAML list of row-major lower-triangle value arrays."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = yaml.safe_load(text)
    if not isinstance(data, list) or not all(isinstance(t, list) for t in data):
        raise ConfigError(f"theta file {path} must hold a list of lists")
    return data


def build_config(file_values: dict, overrides: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig) if f.init}
    unknown = set(file_values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

