"""Scenario configuration read from TOML.

Every section and key is optional; omitted values take the defaults below.
Unknown keys are rejected so that typos do not pass silently.
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .exceptions import ConfigError, DataError
from .thermal import TclParams


@dataclass
class EnsembleConfig:
    M: int = 1000
    hours: float = 24.0
    theta_a: float = 32.0
    ambient_file: str = ""


@dataclass
class ModelConfig:
    n_states: int = 8
    horizon: int = 24
    step_hours: float = 1.0
    lag: int = 1
    thin: int = 1
    smoothing: float = 0.0
    rho0: str = "final"


@dataclass
class SampleConfig:
    N: int = 1000
    fraction: float = 0.15


@dataclass
class UtilityConfig:
    price: float = 0.1
    price_file: str = ""


@dataclass
class MethodConfig:
    name: str = "standard"
    gamma: float = 0.1
    eta: float = 0.5
    varsigma: float = 0.1
    xi: float = 0.001
    b: float = 0.1
    c: float = 2.0
    grid_size: int = 201
    psi: float = 0.5
    mode: str = "weighted"
    terminal: str = "utility"
    variance_lower: str = "inner"


@dataclass
class ScenarioConfig:
    seed: int = 0
    tcl: TclParams = field(default_factory=TclParams)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    samples: SampleConfig = field(default_factory=SampleConfig)
    utility: UtilityConfig = field(default_factory=UtilityConfig)
    method: MethodConfig = field(default_factory=MethodConfig)
    base_dir: Path = field(default_factory=Path.cwd)

    def validate(self) -> "ScenarioConfig":
        e, m, s = self.ensemble, self.model, self.samples
        if e.M < 1 or e.hours <= 0:
            raise ConfigError("ensemble needs M >= 1 and hours > 0")
        if m.n_states < 2 or m.horizon < 1 or m.step_hours <= 0:
            raise ConfigError("model needs n_states >= 2, horizon >= 1 and step_hours > 0")
        if m.rho0 not in ("final", "occupancy", "uniform"):
            raise ConfigError(f"model.rho0 must be final, occupancy or uniform, got {m.rho0!r}")
        if s.N < 2 or not 0 <= s.fraction < 1:
            raise ConfigError("samples need N >= 2 and 0 <= fraction < 1")
        if self.method.gamma <= 0:
            raise ConfigError("method.gamma must be positive")
        return self

    @property
    def sim_steps(self) -> int:
        return int(round(self.ensemble.hours / self.tcl.h))

    def resolve(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.base_dir / p

    def ambient(self) -> np.ndarray:
        if self.ensemble.ambient_file:
            return _read_series(self.resolve(self.ensemble.ambient_file), self.sim_steps, "ambient")
        return np.full(self.sim_steps, float(self.ensemble.theta_a))

    def prices(self) -> np.ndarray:
        if self.utility.price_file:
            return _read_series(self.resolve(self.utility.price_file), self.model.horizon, "price")
        return np.full(self.model.horizon, float(self.utility.price))


def _read_series(path: Path, length: int, what: str) -> np.ndarray:
    if not path.exists():
        raise ConfigError(f"{what} file not found: {path}")
    try:
        values = np.loadtxt(path, delimiter=",", ndmin=1, comments="#")
    except ValueError as exc:
        raise DataError(f"{path}: cannot parse {what} series ({exc})") from None
    if values.ndim != 1 or values.size != length:
        raise DataError(f"{path}: expected {length} {what} values, got {values.size}")
    return values


def _build(cls, data: dict, section: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


_SECTIONS = {"tcl": TclParams, "ensemble": EnsembleConfig, "model": ModelConfig,
             "samples": SampleConfig, "utility": UtilityConfig, "method": MethodConfig}


def config_from_dict(data: dict, base_dir=None) -> ScenarioConfig:
    unknown = sorted(set(data) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    parts = {name: _build(cls, data.get(name, {}), name) for name, cls in _SECTIONS.items()}
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    cfg = ScenarioConfig(seed=seed, base_dir=Path(base_dir) if base_dir else Path.cwd(), **parts)
    return cfg.validate()


def load_config(path=None) -> ScenarioConfig:
    """Read a TOML scenario; ``None`` gives the defaults."""
    if path is None:
        return ScenarioConfig().validate()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, path.parent)
