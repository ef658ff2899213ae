"""Generalized backward recursion for KL-controlled ensembles.

The per-step Bellman equation is

    phi_t(b) = min_P  sum_a P[a, b] * (gamma * log(P[a, b] / B[a, b]) + Z[a, b]
                                         - U_{t+1}(a) + phi_{t+1}(a))

whose minimizer is a Gibbs reweighting of ``B``. With the desirability
``z = exp(-phi / gamma)`` the recursion becomes linear in ``z``:

    z_t(b) = exp(U_t(b) / gamma) * sum_a B[a, b] * exp(-Z[a, b] / gamma) * z_{t+1}(a)

Everything is carried in log space. Utilities are stored as a ``(T, n)``
array whose row ``k`` holds ``U_{k+1}``, the utility collected on arrival
after step ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConfigError, DataError, DomainError, NumericalError
from .markov import MomentMatrices, check_stochastic
from .stats import ConfidenceBounds

TERMINAL_RULES = ("utility", "unit")


@dataclass(frozen=True)
class SolveConfig:
    gamma: float = 0.1
    terminal: str = "utility"
    eta: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.terminal not in TERMINAL_RULES:
            raise ConfigError(f"terminal must be one of {TERMINAL_RULES}, got {self.terminal!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")


class ZTerm:
    """Base matrix ``B`` and surcharge ``Z`` for the recursion.

    Both are ``(n, n)`` or ``(T, n, n)``. ``Z`` only matters where ``B > 0``;
    values elsewhere are ignored.
    """

    def __init__(self, base, surcharge=None, label: str = ""):
        base = np.asarray(base, dtype=float)
        if base.ndim not in (2, 3) or base.shape[-1] != base.shape[-2]:
            raise DataError(f"base matrix must be (n, n) or (T, n, n), got {base.shape}")
        if np.any(base < 0) or not np.all(np.isfinite(base)):
            raise DataError("base matrix must be finite and nonnegative")
        support = base > 0
        if np.any(~support.any(axis=-2)):
            raise DataError("base matrix has a column with empty support")
        if surcharge is None:
            surcharge = np.zeros_like(base)
        surcharge = np.broadcast_to(np.asarray(surcharge, dtype=float), base.shape).copy()
        if not np.all(np.isfinite(surcharge[support])):
            raise DataError("surcharge must be finite on the support of the base matrix")
        surcharge[~support] = 0.0
        self.base = base
        self.surcharge = surcharge
        self.label = label

    @property
    def n(self) -> int:
        return self.base.shape[-1]

    @property
    def support(self) -> np.ndarray:
        return self.base > 0

    @property
    def time_varying(self) -> bool:
        return self.base.ndim == 3

    def at(self, t: int):
        """``(B, Z)`` for step ``t``."""
        if self.time_varying:
            return self.base[t], self.surcharge[t]
        return self.base, self.surcharge

    def log_kernel(self, t: int, gamma: float) -> np.ndarray:
        """``log B - Z / gamma`` with ``-inf`` off the support."""
        B, Z = self.at(t)
        with np.errstate(divide="ignore"):
            out = np.log(B) - Z / gamma
        out[B <= 0] = -np.inf
        return out


@dataclass(frozen=True)
class ValueFunction:
    """Log-desirabilities ``log z`` with shape ``(T + 1, n)``."""

    log_z: np.ndarray
    gamma: float

    @property
    def z(self) -> np.ndarray:
        return np.exp(self.log_z)

    @property
    def phi(self) -> np.ndarray:
        return -self.gamma * self.log_z

    @property
    def T(self) -> int:
        return self.log_z.shape[0] - 1


def check_utility(U, n: int) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.ndim != 2 or U.shape[1] != n:
        raise DataError(f"utility must have shape (T, {n}), got {U.shape}")
    if U.shape[0] < 1:
        raise DataError("utility needs at least one time step")
    if not np.all(np.isfinite(U)):
        raise DataError("utility has non-finite entries")
    return U


def price_utility(price, p_rated_state, T: int, step_hours: float = 1.0) -> np.ndarray:
    """``U_t(a) = -price_t * p_rated_state[a] * step_hours`` as a ``(T, n)`` table.

    ``price`` may be a scalar or a length-``T`` series ($/kWh).
    """
    price = np.broadcast_to(np.asarray(price, dtype=float), (T,))
    return -np.outer(price, np.asarray(p_rated_state, dtype=float)) * step_hours


def _check_horizon(zterm: ZTerm, T: int):
    if zterm.time_varying and zterm.base.shape[0] != T:
        raise DataError(f"time-varying base has {zterm.base.shape[0]} steps, utility has {T}")


def z_term_standard(P_bar) -> ZTerm:
    """No uncertainty: ``B = P_bar``, ``Z = 0``."""
    P_bar = check_stochastic(P_bar, name="default matrix")
    return ZTerm(P_bar, None, label="standard")


def z_term_stochastic(moments: MomentMatrices, gamma: float, variant: str = "linear",
                      pooled: bool = False) -> ZTerm:
    """Second-order (Taylor) correction for normally distributed entries.

    ``Z = gamma * var / (2 mean^2)`` so the policy weight is
    ``exp(-var / (2 mean^2))``. ``variant="quadratic"`` multiplies ``Z`` by a
    further ``gamma``. ``pooled=True`` replaces the entrywise variance by
    its average over the support.
    """
    mean = check_stochastic(moments.mean, name="mean matrix")
    var = np.asarray(moments.variance, dtype=float)
    if np.any(var < 0):
        raise DataError("variance must be nonnegative")
    support = mean > 0
    if np.any(var[~support] > 0):
        idx = tuple(int(i) for i in np.argwhere(~support & (var > 0))[0])
        raise DomainError(f"entry {idx} has zero mean but positive variance")
    if pooled:
        var = np.where(support, var[support].mean(), 0.0)
    Z = np.zeros_like(mean)
    Z[support] = gamma * var[support] / (2.0 * mean[support] ** 2)
    if variant == "quadratic":
        Z *= gamma
    elif variant != "linear":
        raise ConfigError(f"unknown stochastic variant {variant!r}")
    return ZTerm(mean, Z, label="stochastic")


def z_term_dro(bounds: ConfidenceBounds, gamma: float, support=None,
               variant: str = "linear") -> ZTerm:
    """Worst case over the normal-parameter box: ``B = gamma_lo``, ``Z = gamma * zeta_hi / (2 gamma_lo^2)``."""
    lo = np.asarray(bounds.gamma_lo, dtype=float)
    hi_var = np.asarray(bounds.zeta_hi, dtype=float)
    if support is None:
        support = lo > 0
    support = np.asarray(support, dtype=bool)
    if np.any(lo[support] <= 0):
        idx = tuple(int(i) for i in np.argwhere(support & (lo <= 0))[0])
        raise DomainError(f"lower mean bound at {idx} is not positive")
    B = np.where(support, lo, 0.0)
    Z = np.zeros_like(B)
    Z[support] = gamma * hi_var[support] / (2.0 * lo[support] ** 2)
    if variant == "quadratic":
        Z *= gamma
    elif variant != "linear":
        raise ConfigError(f"unknown dro variant {variant!r}")
    return ZTerm(B, Z, label="dro")


def terminal_log_z(U, cfg: SolveConfig) -> np.ndarray:
    if cfg.terminal == "unit":
        return np.zeros(U.shape[1])
    return U[-1] / cfg.gamma


def backward_step(log_kernel: np.ndarray, log_z_next: np.ndarray) -> np.ndarray:
    """``log sum_a exp(log_kernel[a, b] + log_z_next[a])`` per column ``b``."""
    return logsumexp(log_kernel + log_z_next[:, None], axis=0)


def backward_recursion(zterm: ZTerm, U, cfg: SolveConfig) -> ValueFunction:
    """Desirabilities ``log z_t`` for ``t = 0..T``."""
    U = check_utility(U, zterm.n)
    T = U.shape[0]
    _check_horizon(zterm, T)
    g = cfg.gamma
    log_z = np.empty((T + 1, zterm.n))
    log_z[T] = terminal_log_z(U, cfg)
    for t in range(T - 1, -1, -1):
        step = backward_step(zterm.log_kernel(t, g), log_z[t + 1])
        if t >= 1:
            step = step + U[t - 1] / g
        if not np.all(np.isfinite(step)):
            bad = int(np.flatnonzero(~np.isfinite(step))[0])
            raise NumericalError(f"desirability at t={t}, state {bad} is not finite")
        log_z[t] = step
    return ValueFunction(log_z, g)


def gibbs_columns(log_kernel: np.ndarray, log_z_next: np.ndarray, t: int | None = None) -> np.ndarray:
    """Column-normalized ``exp(log_kernel + log_z_next)``."""
    w = log_kernel + log_z_next[:, None]
    top = np.max(w, axis=0)
    if not np.all(np.isfinite(top)):
        beta = int(np.flatnonzero(~np.isfinite(top))[0])
        raise NumericalError(f"zero normalizer at t={t}, beta={beta}")
    P = np.exp(w - top)
    return P / P.sum(axis=0)


def policy_from_z(zterm: ZTerm, vf: ValueFunction) -> np.ndarray:
    """Optimal policy as a ``(T, n, n)`` stack of column-stochastic matrices."""
    T = vf.T
    _check_horizon(zterm, T)
    out = np.empty((T, zterm.n, zterm.n))
    for t in range(T):
        out[t] = gibbs_columns(zterm.log_kernel(t, vf.gamma), vf.log_z[t + 1], t)
    return out


def hybrid_policy(p_wc, p_e, eta: float) -> np.ndarray:
    """Convex combination ``(1 - eta) * p_wc + eta * p_e``."""
    p_wc = np.asarray(p_wc, dtype=float)
    p_e = np.asarray(p_e, dtype=float)
    if p_wc.shape != p_e.shape:
        raise DataError(f"policy shapes differ: {p_wc.shape} vs {p_e.shape}")
    if not 0.0 <= eta <= 1.0:
        raise ConfigError(f"eta must lie in [0, 1], got {eta}")
    if eta == 0.0:
        return p_wc.copy()
    if eta == 1.0:
        return p_e.copy()
    return (1.0 - eta) * p_wc + eta * p_e


def solve(zterm: ZTerm, U, cfg: SolveConfig):
    """Recursion plus policy extraction; returns ``(policy, value_function)``."""
    vf = backward_recursion(zterm, U, cfg)
    return policy_from_z(zterm, vf), vf
