"""First-order thermal model of a homogeneous air-conditioner ensemble.

Each device follows

    theta' = rho * theta + (1 - rho) * (theta_a - aleph * R * P_rated * u) + noise

with ``rho = exp(-h / (R C))``, followed by a cooling hysteresis switch
evaluated on the new temperature.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .exceptions import ConfigError, DataError


@dataclass(frozen=True)
class TclParams:
    R: float = 2.0            # degC / kW
    C: float = 10.0           # kWh / degC
    P_rated: float = 5.6      # kW
    aleph: float = 2.5
    theta_set: float = 22.5   # degC
    delta: float = 0.5        # degC
    h: float = 1.0 / 60.0     # hours
    kappa_std: float = 0.05   # degC

    def __post_init__(self):
        for name in ("R", "C", "P_rated", "aleph", "h"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ConfigError(f"TCL parameter {name} must be positive, got {v}")
        for name in ("delta", "kappa_std"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"TCL parameter {name} must be nonnegative, got {v}")
        if not np.isfinite(self.theta_set):
            raise ConfigError("theta_set must be finite")

    @property
    def varrho(self) -> float:
        """Per-step thermal decay factor exp(-h / (R C))."""
        return float(np.exp(-self.h / (self.R * self.C)))

    @property
    def cooling_offset(self) -> float:
        """Temperature drop aleph * R * P_rated delivered by a running compressor."""
        return self.aleph * self.R * self.P_rated

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TclState:
    theta: float
    u: int

    def __post_init__(self):
        if self.u not in (0, 1):
            raise DataError(f"compressor state must be 0 or 1, got {self.u}")


@dataclass(frozen=True)
class EnsembleTrace:
    """Simulated ensemble output.

    ``theta`` has shape ``(T_sim, M)`` and holds temperatures after each step;
    ``power`` is the aggregate consumption in kW after each step.
    """

    theta: np.ndarray
    on: np.ndarray
    power: np.ndarray
    P_rated: float

    @property
    def T_sim(self) -> int:
        return self.theta.shape[0]

    @property
    def M(self) -> int:
        return self.theta.shape[1]


def _switch(theta, u, params: TclParams):
    upper = params.theta_set + params.delta
    lower = params.theta_set - params.delta
    return np.where(theta > upper, 1, np.where(theta < lower, 0, u))


def _advance(theta, u, params: TclParams, theta_a, noise):
    rho = params.varrho
    new = rho * theta + (1.0 - rho) * (theta_a - params.cooling_offset * u) + noise
    return new, _switch(new, u, params)


def step_tcl(state: TclState, params: TclParams, theta_a: float, noise: float = 0.0) -> TclState:
    """Advance one device by one step (temperature first, then the thermostat)."""
    theta, u = _advance(state.theta, state.u, params, theta_a, noise)
    return TclState(float(theta), int(u))


def simulate_ensemble(params: TclParams, M: int, theta_a_series, T_sim: int | None = None,
                      seed=None) -> EnsembleTrace:
    """Evolve ``M`` independent devices for ``T_sim`` steps.

    Initial temperatures are uniform on the deadband and initial compressor
    states are Bernoulli(0.5); both, and the per-step noise, come from one
    generator seeded with ``seed``.
    """
    theta_a = np.asarray(theta_a_series, dtype=float).ravel()
    if T_sim is None:
        T_sim = theta_a.size
    if T_sim < 1 or M < 1:
        raise ConfigError(f"need T_sim >= 1 and M >= 1, got T_sim={T_sim}, M={M}")
    if theta_a.size != T_sim:
        raise DataError(f"ambient series has length {theta_a.size}, expected {T_sim}")
    if not np.all(np.isfinite(theta_a)):
        raise DataError("ambient series has non-finite values")

    rng = np.random.default_rng(seed)
    theta = rng.uniform(params.theta_set - params.delta, params.theta_set + params.delta, size=M)
    u = (rng.random(M) < 0.5).astype(np.int8)

    thetas = np.empty((T_sim, M))
    ons = np.empty((T_sim, M), dtype=np.int8)
    for t in range(T_sim):
        noise = rng.normal(0.0, params.kappa_std, size=M) if params.kappa_std > 0 else 0.0
        theta, u = _advance(theta, u, params, theta_a[t], noise)
        u = u.astype(np.int8)
        thetas[t] = theta
        ons[t] = u
    power = params.P_rated * ons.sum(axis=1, dtype=np.int64).astype(float)
    return EnsembleTrace(thetas, ons, power, params.P_rated)


def constant_ambient(value: float, T_sim: int) -> np.ndarray:
    return np.full(int(T_sim), float(value))
