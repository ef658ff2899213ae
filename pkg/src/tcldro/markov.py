"""State discretization, transition-matrix estimation and sample generation.

Matrices follow the column-stochastic convention used throughout the
package: entry ``(a, b)`` is the probability of moving from origin state
``b`` to destination state ``a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, ConfigError

STOCHASTIC_ATOL = 1e-9


@dataclass(frozen=True)
class StateSpace:
    """Uniform power bins; ``p_rated_state`` holds each bin's midpoint (kW)."""

    n: int
    bin_edges: np.ndarray
    p_rated_state: np.ndarray

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int) -> "StateSpace":
        if n < 2:
            raise ConfigError(f"need at least 2 states, got {n}")
        if not hi > lo:
            raise DataError(f"power range is empty: [{lo}, {hi}]")
        edges = np.linspace(lo, hi, n + 1)
        return cls(n, edges, 0.5 * (edges[:-1] + edges[1:]))

    def assign(self, power) -> np.ndarray:
        """Map power values onto state indices; values outside the range are clipped."""
        power = np.asarray(power, dtype=float)
        width = (self.bin_edges[-1] - self.bin_edges[0]) / self.n
        idx = np.floor((power - self.bin_edges[0]) / width).astype(int)
        return np.clip(idx, 0, self.n - 1)

    def to_dict(self) -> dict:
        return {"n": int(self.n), "bin_edges": self.bin_edges.tolist(),
                "p_rated_state": self.p_rated_state.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "StateSpace":
        edges = np.asarray(data["bin_edges"], dtype=float)
        mids = np.asarray(data["p_rated_state"], dtype=float)
        n = int(data["n"])
        if edges.shape != (n + 1,) or mids.shape != (n,):
            raise DataError("state space JSON has inconsistent sizes")
        if np.any(np.diff(edges) <= 0):
            raise DataError("bin edges must be strictly increasing")
        if np.any(mids <= edges[:-1]) or np.any(mids >= edges[1:]):
            raise DataError("representative powers must lie inside their bins")
        return cls(n, edges, mids)


@dataclass(frozen=True)
class SampleSet:
    """A stack of column-stochastic matrices, shape ``(N, n, n)``."""

    matrices: np.ndarray
    provenance: dict = field(default_factory=lambda: {"kind": "observed"})

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise DataError(f"samples must have shape (N, n, n), got {mats.shape}")
        for j, m in enumerate(mats):
            check_stochastic(m, name=f"sample {j}")
        pattern = mats[0] > 0
        if np.any((mats > 0) != pattern):
            raise DataError("samples do not share a common zero pattern")
        object.__setattr__(self, "matrices", mats)

    def __len__(self):
        return self.matrices.shape[0]

    @property
    def n(self) -> int:
        return self.matrices.shape[1]

    @property
    def support(self) -> np.ndarray:
        return self.matrices[0] > 0


@dataclass(frozen=True)
class MomentMatrices:
    mean: np.ndarray
    variance: np.ndarray
    n_samples: int


def check_stochastic(P, name: str = "matrix", atol: float = STOCHASTIC_ATOL) -> np.ndarray:
    """Validate a column-stochastic matrix (or a stack of them) and return it as an array."""
    P = np.asarray(P, dtype=float)
    if P.ndim < 2 or P.shape[-1] != P.shape[-2]:
        raise DataError(f"{name} must be square, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise DataError(f"{name} has non-finite entries")
    if np.any(P < -atol) or np.any(P > 1 + atol):
        raise DataError(f"{name} has entries outside [0, 1]")
    sums = P.sum(axis=-2)
    bad = np.abs(sums - 1.0) > atol
    if np.any(bad):
        col = np.argwhere(bad)[0]
        raise DataError(f"{name} column {tuple(int(i) for i in col)} sums to "
                        f"{sums[tuple(col)]:.12g}, not 1")
    return P


def discretize(power, n: int):
    """Uniform discretization of a power series into ``n`` states.

    Returns the :class:`StateSpace` and the per-step state indices; the
    series maximum maps onto state ``n - 1``.
    """
    power = np.asarray(power, dtype=float).ravel()
    if power.size == 0:
        raise DataError("power series is empty")
    lo, hi = float(power.min()), float(power.max())
    if hi == lo:
        raise DataError("power series is constant; cannot discretize a zero range")
    space = StateSpace.uniform(lo, hi, n)
    return space, space.assign(power)


def transition_counts(states, n: int, lag: int = 1) -> np.ndarray:
    """Count matrix ``C[a, b]`` of ``b -> a`` transitions at the given lag (sliding window)."""
    states = np.asarray(states, dtype=int).ravel()
    if lag < 1:
        raise ConfigError(f"lag must be >= 1, got {lag}")
    if states.size <= lag:
        raise DataError(f"series of length {states.size} has no transitions at lag {lag}")
    if states.min() < 0 or states.max() >= n:
        raise DataError(f"state indices must lie in [0, {n - 1}]")
    counts = np.zeros((n, n))
    np.add.at(counts, (states[lag:], states[:-lag]), 1.0)
    return counts


def estimate_transitions(states, n: int, lag: int = 1, smoothing: float = 0.0) -> np.ndarray:
    """Maximum-likelihood column-stochastic transition matrix.

    Every state must occur at least once as an origin. With ``smoothing > 0``
    columns that would otherwise be deterministic receive ``smoothing`` on
    every entry before renormalization.
    """
    counts = transition_counts(states, n, lag)
    totals = counts.sum(axis=0)
    missing = np.flatnonzero(totals == 0)
    if missing.size:
        raise DataError(f"state {int(missing[0])} is never visited as an origin; "
                        "lengthen the trace or reduce the number of states")
    P = counts / totals
    if smoothing > 0:
        deterministic = np.count_nonzero(P, axis=0) == 1
        if np.any(deterministic):
            P[:, deterministic] += smoothing
            P[:, deterministic] /= P[:, deterministic].sum(axis=0)
    return P


def perturb_samples(nominal, fraction: float = 0.15, N: int = 1000, seed=None) -> SampleSet:
    """Draw ``N`` multiplicative perturbations of ``nominal``.

    Each nonzero entry is scaled by ``1 + u`` with ``u ~ Uniform(-fraction, fraction)``
    and each column is renormalized, so zeros and stochasticity are preserved.
    """
    nominal = check_stochastic(nominal, name="nominal matrix")
    if not 0.0 <= fraction < 1.0:
        raise ConfigError(f"perturbation fraction must lie in [0, 1), got {fraction}")
    if N < 2:
        raise ConfigError(f"need at least 2 samples, got {N}")
    rng = np.random.default_rng(seed)
    n = nominal.shape[0]
    u = rng.uniform(-fraction, fraction, size=(N, n, n))
    mats = nominal[None] * (1.0 + u)
    mats /= mats.sum(axis=1, keepdims=True)
    return SampleSet(mats, {"kind": "perturbed", "fraction": float(fraction),
                            "seed": None if seed is None else int(seed)})


def sample_moments(samples) -> MomentMatrices:
    """Entrywise sample mean and unbiased variance."""
    mats = samples.matrices if isinstance(samples, SampleSet) else np.asarray(samples, dtype=float)
    if mats.shape[0] < 2:
        raise DataError("need at least 2 samples for an unbiased variance")
    # shift by the first sample so identical samples give exactly zero variance
    d = mats - mats[0]
    mean = mats[0] + d.mean(axis=0)
    var = d.var(axis=0, ddof=1)
    return MomentMatrices(mean, var, mats.shape[0])


def thin(series, every: int) -> np.ndarray:
    """Keep every ``every``-th element, starting with the first."""
    if every < 1:
        raise ConfigError(f"thinning factor must be >= 1, got {every}")
    return np.asarray(series)[::every]
