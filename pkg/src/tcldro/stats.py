"""Student-t and chi-square quantiles, and the confidence bounds built on them.

The distribution functions are evaluated through the regularized incomplete
beta and gamma functions (continued fractions / power series), and inverted
with a bisection-guarded Newton iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DomainError

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000

#: Lower clamp applied to structurally nonzero lower mean bounds.
GAMMA_FLOOR = 1e-9


# ---------------------------------------------------------------------------
# regularized incomplete beta
# ---------------------------------------------------------------------------

def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b) (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, xc: float | None = None) -> float:
    """Regularized incomplete beta function I_x(a, b).

    ``xc`` may carry an accurately computed ``1 - x``; supplying it avoids
    cancellation when ``x`` is close to one.
    """
    if xc is None:
        xc = 1.0 - x
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(xc)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, xc) / b


# ---------------------------------------------------------------------------
# regularized incomplete gamma
# ---------------------------------------------------------------------------

def _gamma_series(a: float, x: float) -> float:
    ap = a
    total = 1.0 / a
    term = total
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _gamma_cf(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise ArithmeticError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def gammainc(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if x <= 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

def _check_dof(dof) -> float:
    if not dof >= 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {dof}")
    return float(dof)


def _check_prob(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    return float(p)


def t_sf(x: float, dof) -> float:
    """Upper tail P(T > x) of Student's t with ``dof`` degrees of freedom."""
    d = _check_dof(dof)
    if x == 0.0:
        return 0.5
    x2 = x * x
    # I_{d/(d+x^2)}(d/2, 1/2) with the complement passed explicitly
    tail = 0.5 * betainc(0.5 * d, 0.5, d / (d + x2), x2 / (d + x2))
    return tail if x > 0 else 1.0 - tail


def t_cdf(x: float, dof) -> float:
    d = _check_dof(dof)
    if x == 0.0:
        return 0.5
    x2 = x * x
    tail = 0.5 * betainc(0.5 * d, 0.5, d / (d + x2), x2 / (d + x2))
    return 1.0 - tail if x > 0 else tail


def t_pdf(x: float, dof) -> float:
    d = _check_dof(dof)
    log_pdf = (
        math.lgamma(0.5 * (d + 1.0)) - math.lgamma(0.5 * d)
        - 0.5 * math.log(d * math.pi) - 0.5 * (d + 1.0) * math.log1p(x * x / d)
    )
    return math.exp(log_pdf)


def chi2_cdf(x: float, dof) -> float:
    k = _check_dof(dof)
    return gammainc(0.5 * k, 0.5 * x) if x > 0 else 0.0


def chi2_sf(x: float, dof) -> float:
    k = _check_dof(dof)
    return gammaincc(0.5 * k, 0.5 * x) if x > 0 else 1.0


def chi2_pdf(x: float, dof) -> float:
    k = _check_dof(dof)
    if x <= 0.0:
        return 0.0
    return math.exp((0.5 * k - 1.0) * math.log(x) - 0.5 * x - 0.5 * k * math.log(2.0) - math.lgamma(0.5 * k))


def _invert_decreasing(fn, dfn, target: float, lo: float, hi: float) -> float:
    """Solve fn(x) = target for a decreasing fn on [lo, hi]."""
    x = 0.5 * (lo + hi)
    for _ in range(400):
        fx = fn(x)
        err = fx - target
        if err == 0.0:
            return x
        if err > 0.0:
            lo = x
        else:
            hi = x
        if hi - lo <= 4.0 * _EPS * max(1.0, abs(x)):
            return x
        slope = dfn(x)
        nxt = x - err / slope if slope != 0.0 else math.nan
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= 2.0 * _EPS * max(1.0, abs(x)):
            return nxt
        x = nxt
    return x


def t_quantile(p: float, dof) -> float:
    """Quantile of Student's t distribution.

    Examples
    --------
    >>> round(t_quantile(0.975, 1), 4)
    12.7062
    """
    p = _check_prob(p)
    d = _check_dof(dof)
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -t_quantile(1.0 - p, d)
    q = 1.0 - p
    hi = 1.0
    while t_sf(hi, d) > q:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("t quantile bracket overflow")
    return _invert_decreasing(lambda x: t_sf(x, d), lambda x: -t_pdf(x, d), q, 0.0, hi)


def chi2_quantile(p: float, dof) -> float:
    """Quantile of the chi-square distribution with ``dof`` degrees of freedom."""
    p = _check_prob(p)
    k = _check_dof(dof)
    hi = max(k, 1.0)
    while chi2_cdf(hi, k) < p:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("chi-square quantile bracket overflow")
    if p <= 0.5:
        # cdf is increasing, so invert its negation
        return _invert_decreasing(lambda x: -chi2_cdf(x, k), lambda x: -chi2_pdf(x, k), -p, 0.0, hi)
    return _invert_decreasing(lambda x: chi2_sf(x, k), lambda x: -chi2_pdf(x, k), 1.0 - p, 0.0, hi)


# ---------------------------------------------------------------------------
# confidence bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfidenceBounds:
    """Entrywise bounds on the mean and variance of the default transitions."""

    gamma_lo: np.ndarray
    gamma_hi: np.ndarray
    zeta_lo: np.ndarray
    zeta_hi: np.ndarray

    @classmethod
    def degenerate(cls, mean, variance) -> "ConfidenceBounds":
        """Bounds collapsed onto the point estimates."""
        mean = np.asarray(mean, dtype=float)
        variance = np.asarray(variance, dtype=float)
        return cls(mean.copy(), mean.copy(), variance.copy(), variance.copy())


def mean_bounds(mean, sigma, n_samples: int, varsigma: float, support=None):
    """Confidence interval for the mean, ``mean -/+ t_{1-varsigma/2, N-1} sigma / sqrt(N)``.

    Works on scalars or arrays. Where ``support`` is true (default: ``mean > 0``)
    the lower bound is clamped at :data:`GAMMA_FLOOR`.
    """
    if n_samples < 2:
        raise ConfigError(f"need at least 2 samples, got {n_samples}")
    if not 0.0 < varsigma < 1.0:
        raise ConfigError(f"varsigma must lie in (0, 1), got {varsigma}")
    mean = np.asarray(mean, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise DomainError("standard deviation must be nonnegative")
    half = t_quantile(1.0 - varsigma / 2.0, n_samples - 1) * sigma / math.sqrt(n_samples)
    lo = mean - half
    hi = mean + half
    if support is None:
        support = mean > 0
    lo = np.where(support, np.maximum(lo, GAMMA_FLOOR), lo)
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def variance_bounds(sigma2, n_samples: int, xi: float, lower: str = "inner"):
    """Confidence interval for the variance from chi-square quantiles (dof N-1).

    ``lower="inner"`` divides by the ``(1 - xi)/2`` quantile for the lower
    bound; ``lower="standard"`` uses the textbook ``1 - xi/2`` quantile.
    The upper bound always divides by the ``xi/2`` quantile.
    """
    if n_samples < 2:
        raise ConfigError(f"need at least 2 samples, got {n_samples}")
    if not 0.0 < xi < 1.0:
        raise ConfigError(f"xi must lie in (0, 1), got {xi}")
    if lower == "inner":
        p_lo = (1.0 - xi) / 2.0
    elif lower == "standard":
        p_lo = 1.0 - xi / 2.0
    else:
        raise ConfigError(f"unknown variance lower-bound rule {lower!r}")
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 < 0):
        raise DomainError("variance must be nonnegative")
    dof = n_samples - 1
    lo = dof * sigma2 / chi2_quantile(p_lo, dof)
    hi = dof * sigma2 / chi2_quantile(xi / 2.0, dof)
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def confidence_bounds(moments, n_samples: int, varsigma: float, xi: float,
                      lower: str = "inner") -> ConfidenceBounds:
    """Entrywise :class:`ConfidenceBounds` for a :class:`~tcldro.markov.MomentMatrices`."""
    mean = np.asarray(moments.mean, dtype=float)
    var = np.asarray(moments.variance, dtype=float)
    support = mean > 0
    g_lo, g_hi = mean_bounds(mean, np.sqrt(var), n_samples, varsigma, support=support)
    z_lo, z_hi = variance_bounds(var, n_samples, xi, lower=lower)
    off = ~support
    return ConfidenceBounds(
        np.where(off, 0.0, g_lo), np.where(off, 0.0, g_hi),
        np.where(off, 0.0, z_lo), np.where(off, 0.0, z_hi),
    )
