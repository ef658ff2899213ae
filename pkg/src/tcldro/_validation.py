"""Input checks shared by the estimators and the CLI."""
from __future__ import annotations

import numbers

import numpy as np

from .exceptions import ConfigError, DataError
from .markov import SampleSet, check_stochastic


def check_positive(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a positive number, got {value!r}")
    return float(value)


def check_in_range(value, name: str, lo: float, hi: float) -> float:
    if not isinstance(value, numbers.Real) or not lo <= value <= hi:
        raise ConfigError(f"{name} must lie in [{lo}, {hi}], got {value!r}")
    return float(value)


def as_sample_matrices(samples) -> np.ndarray:
    """Accept a :class:`SampleSet`, an ``(N, n, n)`` stack or one ``(n, n)`` matrix."""
    if isinstance(samples, SampleSet):
        return samples.matrices
    mats = np.asarray(samples, dtype=float)
    if mats.ndim == 2:
        mats = mats[None]
    if mats.ndim != 3:
        raise DataError(f"expected (N, n, n) matrices, got shape {mats.shape}")
    return check_stochastic(mats, name="sample set")
