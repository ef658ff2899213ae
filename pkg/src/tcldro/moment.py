"""Moment-based ambiguity: worst-case expected ``-log`` of a transition entry.

For one entry with nominal mean ``m`` and variance ``sigma2`` the ambiguity
set holds every distribution ``q`` on a finite grid ``W`` with

    |E_q[w] - m| <= b,    E_q[(w - m)^2] <= c * sigma2.

The worst case ``sup_q E_q[-log w]`` is an LP in ``q``; its dual is the
semi-infinite program

    min  (b - m) lam_lo + (b + m) lam_hi + c sigma2 Lam + nu
    s.t. (lam_hi - lam_lo) w + Lam (w - m)^2 + nu >= -log w   for all w in W

with ``lam_lo, lam_hi, Lam >= 0``. Both are solved with :func:`tcldro.lp.lp_solve`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bellman import SolveConfig, ZTerm, backward_recursion, check_utility, policy_from_z
from .exceptions import ConfigError, DataError, NumericalError
from .lp import INFEASIBLE, LpProblem, lp_solve
from .markov import MomentMatrices, check_stochastic

GRID_FLOOR = 1e-6
DEFAULT_GRID_SIZE = 201


def default_grid(m: float, sigma2: float, b: float, c: float, size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Uniform grid on ``[max(1e-6, m - b - 3 s), min(1, m + b + 3 s)]`` with ``s = sqrt(c sigma2)``.

    The nominal mean is always inserted so that the point mass at ``m`` is
    representable.
    """
    spread = 3.0 * np.sqrt(max(c * sigma2, 0.0))
    lo = max(GRID_FLOOR, m - b - spread)
    hi = min(1.0, m + b + spread)
    if hi - lo <= 1e-15:
        return np.array([m])
    grid = np.linspace(lo, hi, size)
    return np.unique(np.concatenate([grid, [m]]))


@dataclass(frozen=True)
class MomentAmbiguity:
    m: float
    sigma2: float
    b: float
    c: float
    grid: np.ndarray = None

    def __post_init__(self):
        if not 0.0 < self.m <= 1.0:
            raise DataError(f"nominal mean must lie in (0, 1], got {self.m}")
        if self.sigma2 < 0 or self.b < 0:
            raise ConfigError("sigma2 and b must be nonnegative")
        if self.c * self.sigma2 < 0:
            raise ConfigError("c * sigma2 must be nonnegative")
        grid = self.grid
        if grid is None:
            grid = default_grid(self.m, self.sigma2, self.b, self.c)
        grid = np.asarray(grid, dtype=float).ravel()
        if grid.size == 0 or np.any(grid <= 0) or np.any(grid > 1) or np.any(np.diff(grid) <= 0):
            raise DataError("grid must be strictly increasing points in (0, 1]")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class DualSolution:
    lambda_lo: float
    lambda_hi: float
    Lambda: float
    nu: float
    value: float

    def residual(self, amb: MomentAmbiguity) -> np.ndarray:
        """Constraint slack at every grid point (nonnegative when feasible)."""
        w = amb.grid
        lhs = (self.lambda_hi - self.lambda_lo) * w + self.Lambda * (w - amb.m) ** 2 + self.nu
        return lhs + np.log(w)


def worst_case_neglog_primal(amb: MomentAmbiguity):
    """Maximize ``E_q[-log w]`` over the ambiguity set; returns ``(value, q)``."""
    w = amb.grid
    loss = -np.log(w)
    A = np.vstack([np.ones_like(w), w, w, (w - amb.m) ** 2])
    rhs = [1.0, amb.m - amb.b, amb.m + amb.b, amb.c * amb.sigma2]
    res = lp_solve(LpProblem(-loss, A, ["=", ">=", "<=", "<="], rhs))
    if res.status == INFEASIBLE:
        raise DataError(f"no distribution on the grid matches mean {amb.m:.6g} and variance "
                        f"bound {amb.c * amb.sigma2:.3g}; widen the grid")
    if not res.optimal:
        raise NumericalError(f"primal worst-case LP returned {res.status}")
    return -res.value, res.x


def worst_case_neglog_dual(amb: MomentAmbiguity) -> DualSolution:
    """Dual of :func:`worst_case_neglog_primal` enforced at every grid point."""
    w = amb.grid
    cost = [amb.b - amb.m, amb.b + amb.m, amb.c * amb.sigma2, 1.0]
    A = np.column_stack([-w, w, (w - amb.m) ** 2, np.ones_like(w)])
    bounds = [(0.0, np.inf)] * 3 + [(-np.inf, np.inf)]
    res = lp_solve(LpProblem(cost, A, [">="] * w.size, -np.log(w), bounds))
    if not res.optimal:
        raise NumericalError(f"dual worst-case LP returned {res.status}")
    lam_lo, lam_hi, Lam, nu = (float(v) for v in res.x)
    return DualSolution(lam_lo, lam_hi, Lam, nu, res.value)


@dataclass
class WorstCaseTable:
    """Per-entry worst-case values; ``primal``/``dual`` are NaN off the support."""

    primal: np.ndarray
    dual: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    b: float
    c: float

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.primal - self.dual)

    def rows(self):
        for a, bb in zip(*np.nonzero(np.isfinite(self.primal))):
            yield {"alpha": int(a), "beta": int(bb), "m": float(self.mean[a, bb]),
                   "sigma2": float(self.variance[a, bb]), "b": self.b, "c": self.c,
                   "primal": float(self.primal[a, bb]), "dual": float(self.dual[a, bb]),
                   "gap": float(self.gap[a, bb])}


def worst_case_table(moments: MomentMatrices, b: float, c: float, grid_size: int = DEFAULT_GRID_SIZE,
                     grid_params: tuple | None = None, dual: bool = True) -> WorstCaseTable:
    """Solve the worst-case LPs for every structurally nonzero entry.

    ``grid_params=(b_grid, c_grid)`` builds the grids from those values
    instead of ``(b, c)``, so a sweep can share one grid per entry.
    """
    mean = check_stochastic(moments.mean, name="mean matrix")
    var = np.asarray(moments.variance, dtype=float)
    if b < 0 or c * 1.0 < 0:
        raise ConfigError("b and c must be nonnegative")
    gb, gc = (b, c) if grid_params is None else grid_params
    primal = np.full(mean.shape, np.nan)
    dval = np.full(mean.shape, np.nan)
    for a, bb in zip(*np.nonzero(mean > 0)):
        m, s2 = float(mean[a, bb]), float(var[a, bb])
        amb = MomentAmbiguity(m, s2, b, c, default_grid(m, s2, gb, gc, grid_size))
        primal[a, bb] = worst_case_neglog_primal(amb)[0]
        dval[a, bb] = worst_case_neglog_dual(amb).value if dual else primal[a, bb]
    return WorstCaseTable(primal, dval, mean, var, float(b), float(c))


def moment_effective_zterm(wc, mean, gamma: float) -> ZTerm:
    """Fold worst-case constants into the recursion: ``Z = gamma (WC + log mean)``, ``B = mean``.

    Then ``gamma log(P / mean) + Z = gamma (log P + WC)``, the single-level stage cost.
    """
    mean = np.asarray(mean, dtype=float)
    wc = np.asarray(wc, dtype=float)
    support = mean > 0
    if not np.all(np.isfinite(wc[support])):
        raise DataError("worst-case values must be finite on the support")
    Z = np.zeros_like(mean)
    Z[support] = gamma * (wc[support] + np.log(mean[support]))
    return ZTerm(mean, Z, label="moment")


@dataclass
class MomentSolution:
    policy: np.ndarray
    value: object
    zterm: ZTerm
    table: WorstCaseTable
    diagnostics: dict = field(default_factory=dict)


def solve_moment_mdp(moments: MomentMatrices, b: float, c: float, U, cfg: SolveConfig,
                     grid_size: int = DEFAULT_GRID_SIZE, table: WorstCaseTable | None = None,
                     route: str = "dual", grid_params: tuple | None = None) -> MomentSolution:
    """Moment-robust policy.

    ``route`` picks which LP value enters the recursion (``"dual"`` or
    ``"primal"``). A precomputed ``table`` is reused as is; the values do not
    depend on ``gamma`` or the utility.
    """
    U = check_utility(U, moments.mean.shape[0])
    if table is None:
        table = worst_case_table(moments, b, c, grid_size, grid_params, dual=(route == "dual"))
    if route not in ("dual", "primal"):
        raise ConfigError(f"unknown route {route!r}")
    wc = table.dual if route == "dual" else table.primal
    zterm = moment_effective_zterm(wc, moments.mean, cfg.gamma)
    vf = backward_recursion(zterm, U, cfg)
    policy = policy_from_z(zterm, vf)
    gap = np.nanmax(table.gap) if np.any(np.isfinite(table.gap)) else 0.0
    return MomentSolution(policy, vf, zterm, table, {"max_duality_gap": float(gap)})
