"""Forward evaluation of policies: distributions, power profiles and costs."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bellman import SolveConfig, ZTerm, check_utility
from .exceptions import DataError, DomainError
from .markov import STOCHASTIC_ATOL, check_stochastic


def check_distribution(rho, n: int | None = None, atol: float = STOCHASTIC_ATOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=float).ravel()
    if n is not None and rho.size != n:
        raise DataError(f"distribution has {rho.size} entries, expected {n}")
    if not np.all(np.isfinite(rho)) or np.any(rho < -atol) or abs(rho.sum() - 1.0) > atol:
        raise DataError("distribution must be nonnegative and sum to 1")
    return rho


def check_policy(policy, n: int | None = None) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.ndim == 2:
        policy = policy[None]
    if policy.ndim != 3:
        raise DataError(f"policy must have shape (T, n, n), got {policy.shape}")
    if n is not None and policy.shape[1] != n:
        raise DataError(f"policy acts on {policy.shape[1]} states, expected {n}")
    return check_stochastic(policy, name="policy")


def forward_evolve(rho0, policy) -> np.ndarray:
    """``rho_{t+1} = P_t @ rho_t``; returns shape ``(T + 1, n)``."""
    policy = check_policy(policy)
    rho0 = check_distribution(rho0, policy.shape[1])
    T = policy.shape[0]
    rho = np.empty((T + 1, rho0.size))
    rho[0] = rho0
    for t in range(T):
        rho[t + 1] = policy[t] @ rho[t]
    return rho


def power_profile(rho, p_rated_state) -> np.ndarray:
    """Aggregate power ``p_t = sum_b p_rated_state[b] * rho_t[b]``."""
    return np.asarray(rho, dtype=float) @ np.asarray(p_rated_state, dtype=float)


def _xlogy_ratio(P, B):
    """``P * log(P / B)`` with the convention 0 log 0 = 0."""
    out = np.zeros_like(P)
    pos = P > 0
    out[pos] = P[pos] * (np.log(P[pos]) - np.log(B[pos]))
    return out


def _support_check(policy, zterm: ZTerm):
    T = policy.shape[0]
    for t in range(T):
        B, _ = zterm.at(t)
        bad = (policy[t] > 0) & (B <= 0)
        if np.any(bad):
            a, b = (int(i) for i in np.argwhere(bad)[0])
            raise DomainError(f"policy puts mass outside the reference support at t={t}, "
                              f"alpha={a}, beta={b}")


def stage_kl(policy, reference) -> np.ndarray:
    """Per-step, per-origin ``KL(P_t[:, b] || reference[:, b])``, shape ``(T, n)``."""
    policy = check_policy(policy)
    ref = np.asarray(reference, dtype=float)
    ref = np.broadcast_to(ref, policy.shape)
    bad = (policy > 0) & (ref <= 0)
    if np.any(bad):
        t, a, b = (int(i) for i in np.argwhere(bad)[0])
        raise DomainError(f"policy puts mass outside the reference support at t={t}, "
                          f"alpha={a}, beta={b}")
    return _xlogy_ratio(policy, ref).sum(axis=1)


def stage_costs(policy, zterm: ZTerm, U, cfg: SolveConfig) -> np.ndarray:
    """Per-step, per-origin cost ``sum_a P (-U_{t+1} + gamma log(P/B) + Z)``, shape ``(T, n)``."""
    policy = check_policy(policy, zterm.n)
    U = check_utility(U, zterm.n)
    T = policy.shape[0]
    if U.shape[0] != T:
        raise DataError(f"policy horizon {T} does not match utility horizon {U.shape[0]}")
    _support_check(policy, zterm)
    g = cfg.gamma
    out = np.empty((T, zterm.n))
    for t in range(T):
        B, Z = zterm.at(t)
        P = policy[t]
        reward = U[t].copy()
        if t == T - 1 and cfg.terminal == "unit":
            reward[:] = 0.0
        out[t] = (g * _xlogy_ratio(P, B) + P * Z).sum(axis=0) - reward @ P
    return out


def expected_cost(policy, zterm: ZTerm, U, cfg: SolveConfig, rho0, rho=None) -> float:
    """Objective of ``policy`` under the method encoded by ``zterm``.

    ``rho`` may carry a precomputed distribution path; by default it is the
    forward evolution of ``rho0`` under ``policy``.
    """
    if rho is None:
        rho = forward_evolve(rho0, policy)
    costs = stage_costs(policy, zterm, U, cfg)
    return float(np.sum(rho[:-1] * costs))


def out_of_sample_costs(policy, samples, U, cfg: SolveConfig, rho0) -> np.ndarray:
    """Standard-model cost of ``policy`` with each sample matrix as the default dynamics.

    The distribution path is evolved under ``policy`` itself, so only the KL
    reference changes between samples.
    """
    policy = check_policy(policy)
    mats = getattr(samples, "matrices", samples)
    mats = np.asarray(mats, dtype=float)
    rho = forward_evolve(rho0, policy)
    U = check_utility(U, policy.shape[1])
    T = policy.shape[0]
    # occupation-weighted transition mass W[a, b] = sum_t rho_t[b] P_t[a, b]
    W = np.einsum("tb,tab->ab", rho[:-1], policy)
    pos = W > 0
    if np.any(mats[:, pos] <= 0):
        raise DomainError("policy puts mass outside a sample's support")
    entropy = float(np.sum(rho[:-1, None, :] * _xlogy_ratio(policy, np.ones_like(policy))))
    reward = 0.0
    for t in range(T):
        if t == T - 1 and cfg.terminal == "unit":
            continue
        reward += float(U[t] @ (policy[t] @ rho[t]))
    cross = np.einsum("ab,jab->j", np.where(pos, W, 0.0),
                      np.log(np.where(pos[None], mats, 1.0)))
    return cfg.gamma * (entropy - cross) - reward


def delta_power(a, b) -> np.ndarray:
    """Difference ``a.power - b.power`` of two dispatch results (or power arrays)."""
    pa = np.asarray(getattr(a, "power", a), dtype=float)
    pb = np.asarray(getattr(b, "power", b), dtype=float)
    if pa.shape != pb.shape:
        raise DataError(f"horizons differ: {pa.shape} vs {pb.shape}")
    return pa - pb


@dataclass
class DispatchResult:
    method: str
    gamma: float
    objective: float
    policy: np.ndarray
    rho: np.ndarray
    power: np.ndarray
    params: dict = field(default_factory=dict)
    oos_mean: float | None = None
    oos_worst: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self, rho_path: str | None = None) -> str:
        doc = {
            "method": self.method,
            "gamma": float(self.gamma),
            "params": {k: self.params.get(k) for k in ("eta", "xi", "varsigma", "b", "c", "psi")},
            "objective": float(self.objective),
            "power": [float(p) for p in self.power],
            "rho_path": rho_path,
        }
        extra = {k: v for k, v in self.params.items() if k not in doc["params"]}
        if extra:
            doc["params"].update(extra)
        if self.oos_mean is not None:
            doc["oos_mean"] = float(self.oos_mean)
            doc["oos_worst"] = float(self.oos_worst)
        return json.dumps(doc, indent=2, sort_keys=False)
