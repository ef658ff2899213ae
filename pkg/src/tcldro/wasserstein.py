"""Wasserstein-ball ambiguity on the columns of the default matrix.

For an origin state ``b`` let ``y_1..y_N`` be the observed columns restricted
to their support and ``F = {v : lo <= v <= hi, sum(v) = 1}`` the sample box
cut by the simplex hyperplane. For nonnegative weights ``w`` the worst-case
expected loss over the order-1, l1 ball of radius ``psi`` is

    h(w) = min_{lam >= 0}  lam * psi + mean_y max_{v in F} (w . c(v) - lam * |v - y|_1)

with ``c(v) = -log v``. The inner maximum of a convex function minus a
piecewise-linear one is attained at a vertex of one of the sign regions of
``v - y``, so it suffices to scan :func:`candidate_points`.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp, softmax

from .bellman import SolveConfig, ValueFunction, ZTerm, check_utility, terminal_log_z
from .exceptions import ConfigError, DataError, NumericalError

FEAS_TOL = 1e-9
DEDUP_TOL = 1e-12
MODES = ("weighted", "literal")


def _dedup(points: np.ndarray) -> np.ndarray:
    """Drop rows within ``DEDUP_TOL`` (max-norm) of an earlier row, keeping order."""
    if len(points) <= 1:
        return points
    order = np.lexsort(points.T[::-1])
    srt = points[order]
    keep_sorted = np.ones(len(points), dtype=bool)
    anchor = srt[0]
    for i in range(1, len(srt)):
        if np.max(np.abs(srt[i] - anchor)) <= DEDUP_TOL:
            keep_sorted[i] = False
        else:
            anchor = srt[i]
    # among duplicates retain the earliest original index
    groups = np.cumsum(keep_sorted) - 1
    first = np.full(groups[-1] + 1, len(points))
    np.minimum.at(first, groups, order)
    return points[np.sort(first)]


def _slack_points(levels: np.ndarray, lo, hi) -> np.ndarray:
    """All vectors with ``k - 1`` coordinates from ``levels`` and one slack coordinate.

    ``levels`` has shape ``(L, k)``: row ``j`` lists the allowed value of every
    coordinate at level ``j``.
    """
    L, k = levels.shape
    if k == 1:
        return np.ones((1, 1)) if lo[0] - FEAS_TOL <= 1.0 <= hi[0] + FEAS_TOL else np.empty((0, 1))
    out = []
    combos = np.array(list(itertools.product(range(L), repeat=k - 1)))
    for s in range(k):
        others = [j for j in range(k) if j != s]
        pts = np.empty((len(combos), k))
        pts[:, others] = levels[combos, others]
        pts[:, s] = 1.0 - pts[:, others].sum(axis=1)
        ok = (pts[:, s] >= lo[s] - FEAS_TOL) & (pts[:, s] <= hi[s] + FEAS_TOL)
        out.append(pts[ok])
    return np.vstack(out)


def candidate_points(lo, hi, y) -> np.ndarray:
    """Vertices of the sign regions of ``v - y`` inside ``F``.

    Every coordinate but one sits at ``lo``, ``y`` or ``hi``; the remaining
    coordinate absorbs ``1 - sum(others)`` and must respect its bounds.
    Duplicates (within 1e-12) are removed, first occurrence kept.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(lo > hi + FEAS_TOL) or lo.sum() > 1 + FEAS_TOL or hi.sum() < 1 - FEAS_TOL:
        raise DataError("box does not meet the simplex hyperplane")
    pts = _dedup(_slack_points(np.vstack([lo, y, hi]), lo, hi))
    if len(pts) == 0:
        raise DataError("candidate set is empty")
    return pts


def box_vertices(lo, hi) -> np.ndarray:
    """Vertices of ``F``: all but one coordinate at a bound."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return _dedup(_slack_points(np.vstack([lo, hi]), lo, hi))


def neglog(v) -> np.ndarray:
    return -np.log(v)


def inner_sup(lam: float, y, candidates, weights=None):
    """``max_v  w . c(v) - lam |v - y|_1`` over ``candidates``; returns ``(value, index)``.

    ``weights=None`` gives the unweighted loss ``sum(-log v)``. Ties go to the
    first candidate.
    """
    candidates = np.asarray(candidates, dtype=float)
    w = np.ones(candidates.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    dist = np.abs(candidates - np.asarray(y)).sum(axis=1)
    dist[dist <= DEDUP_TOL * candidates.shape[1]] = 0.0
    score = neglog(candidates) @ w - lam * dist
    j = int(np.argmax(score))
    return float(score[j]), j


@dataclass
class WorstCase:
    value: float
    kappa: np.ndarray
    lambda_star: float
    fast_path: bool


class ColumnBall:
    """Wasserstein ball for one origin state.

    ``samples`` are the column vectors restricted to their common support.
    Candidate points are built lazily and cached, since they do not depend
    on the loss weights.
    """

    def __init__(self, samples, psi: float):
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if psi < 0 or not np.isfinite(psi):
            raise ConfigError(f"radius psi must be a nonnegative number, got {psi}")
        if np.any(np.abs(samples.sum(axis=1) - 1.0) > FEAS_TOL):
            raise DataError("sample columns must sum to 1 on the support")
        if np.any(samples <= 0):
            raise DataError("sample columns must be positive on the support")
        self.samples = samples
        self.psi = float(psi)
        self.lo = samples.min(axis=0)
        self.hi = samples.max(axis=0)
        self.k = samples.shape[1]
        self._verts = None
        self._cand = None

    @property
    def vertices(self):
        if self._verts is None:
            v = box_vertices(self.lo, self.hi)
            self._verts = (v, neglog(v))
        return self._verts

    @property
    def candidates(self):
        """``(points, costs, dist, owner, starts)`` stacked over samples."""
        if self._cand is None:
            pts, owner = [], []
            for j, y in enumerate(self.samples):
                c = candidate_points(self.lo, self.hi, y)
                pts.append(c)
                owner.append(np.full(len(c), j))
            pts = np.vstack(pts)
            owner = np.concatenate(owner)
            dist = np.abs(pts - self.samples[owner]).sum(axis=1)
            # the sample itself reappears with round-off in its slack coordinate
            dist[dist <= DEDUP_TOL * self.k] = 0.0
            starts = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]])
            self._cand = (pts, neglog(pts), dist, owner, starts)
        return self._cand

    @property
    def n_candidates(self) -> int:
        return 0 if self._cand is None else len(self._cand[0])

    def sample_loss(self, weights=None) -> float:
        """Empirical average ``mean_y w . c(y)``; the value at ``psi = 0``."""
        w = np.ones(self.k) if weights is None else np.asarray(weights, dtype=float)
        return float(np.mean(neglog(self.samples) @ w))

    def h(self, lam: float, weights=None) -> float:
        """Dual objective ``lam psi + mean_y g_y(lam)``."""
        w = np.ones(self.k) if weights is None else np.asarray(weights, dtype=float)
        _, costs, dist, _, starts = self.candidates
        g = np.maximum.reduceat(costs @ w - lam * dist, starts)
        return lam * self.psi + float(g.mean())

    def _active(self, a, dist, starts, owner, lam):
        """Per-sample maxima and the tied candidates with smallest / largest distance."""
        score = a - lam * dist
        g = np.maximum.reduceat(score, starts)
        tie = score >= g[owner] - 1e-12 * (1.0 + np.abs(g[owner]))
        d_small = np.minimum.reduceat(np.where(tie, dist, np.inf), starts)
        d_large = np.maximum.reduceat(np.where(tie, dist, -np.inf), starts)
        return g, tie, d_small, d_large

    @staticmethod
    def _pick(tie, dist, target, owner, n):
        """Index of the first tied candidate per sample whose distance equals ``target``."""
        hit = np.flatnonzero(tie & (dist == target[owner]))
        first = np.full(n, -1)
        rev = hit[::-1]
        first[owner[rev]] = rev
        return first

    def worst_case(self, weights=None) -> WorstCase:
        """Worst-case expected weighted loss and its supporting cost vector ``kappa``.

        ``kappa`` is the expected ``c(v)`` under a maximizing distribution, so
        ``weights . kappa`` equals the worst-case value.
        """
        w = np.ones(self.k) if weights is None else np.asarray(weights, dtype=float)
        if self.k == 1:
            return WorstCase(0.0, np.zeros(1), 0.0, True)
        # lam = 0 is optimal when one global maximizer is within reach on average
        verts, vcost = self.vertices
        j0 = int(np.argmax(vcost @ w))
        if np.mean(np.abs(self.samples - verts[j0]).sum(axis=1)) <= self.psi:
            return WorstCase(float(vcost[j0] @ w), vcost[j0].copy(), 0.0, True)

        _, costs, dist, owner, starts = self.candidates
        N = len(self.samples)
        a = costs @ w
        lam, value, d_small, d_large, tie = self._lambda_search(a, dist, owner, starts)
        i_right = self._pick(tie, dist, d_small, owner, N)
        i_left = self._pick(tie, dist, d_large, owner, N)
        D_r, D_l = d_small.mean(), d_large.mean()
        theta = 0.0 if D_l - D_r <= 0 else min(1.0, max(0.0, (self.psi - D_r) / (D_l - D_r)))
        if lam == 0.0:
            theta = 0.0
        kappa = (1.0 - theta) * costs[i_right].mean(axis=0) + theta * costs[i_left].mean(axis=0)
        return WorstCase(value, kappa, lam, False)

    def _lambda_search(self, a, dist, owner, starts):
        psi = self.psi
        g, tie, d_small, d_large = self._active(a, dist, starts, owner, 0.0)
        if d_small.mean() <= psi:
            return 0.0, float(g.mean()), d_small, d_large, tie
        pos = dist[dist > 0]
        cap = 10.0 * max(np.abs(a).max(), 1.0) / pos.min()
        _, _, ds_cap, _ = self._active(a, dist, starts, owner, cap)
        if ds_cap.mean() > psi:
            raise NumericalError(f"lambda cap {cap:.3g} reached with negative subgradient")
        lo, hi = 0.0, cap
        for _ in range(200):
            if hi - lo <= 1e-10 * max(1.0, hi):
                break
            mid = 0.5 * (lo + hi)
            _, _, ds, _ = self._active(a, dist, starts, owner, mid)
            if ds.mean() <= psi:
                hi = mid
            else:
                lo = mid
        # walk breakpoints from lo until the right slope turns nonnegative
        lam = lo
        for _ in range(10 * len(starts) + 10):
            g, tie, d_small, d_large = self._active(a, dist, starts, owner, lam)
            if d_small.mean() <= psi and lam > 0:
                break
            act = self._pick(tie, dist, d_small, owner, len(starts))
            a_act, d_act = a[act][owner], d_small[owner]
            steeper = dist < d_act - 1e-15
            with np.errstate(divide="ignore", invalid="ignore"):
                cross = np.where(steeper, (a_act - a) / (d_act - dist), np.inf)
            cross = cross[cross > lam * (1 + 1e-15)]
            if cross.size == 0:
                raise NumericalError("breakpoint walk ran out of breakpoints")
            lam = float(cross.min())
        else:
            raise NumericalError("breakpoint walk did not terminate")
        return lam, lam * psi + float(g.mean()), d_small, d_large, tie


def column_balls(samples, psi: float):
    """One :class:`ColumnBall` per origin state plus the per-column support indices."""
    mats = getattr(samples, "matrices", samples)
    mats = np.asarray(mats, dtype=float)
    support = mats[0] > 0
    balls, supports = [], []
    for b in range(mats.shape[2]):
        idx = np.flatnonzero(support[:, b])
        balls.append(ColumnBall(mats[:, idx, b], psi))
        supports.append(idx)
    return balls, supports


def lambda_search(psi: float, samples, weights=None):
    """Optimal dual multiplier and worst-case value for one column's samples."""
    ball = ColumnBall(samples, psi)
    wc = ball.worst_case(weights)
    return wc.lambda_star, wc.value


def solve_column(ball: ColumnBall, L: np.ndarray, gamma: float, tol: float = 1e-6,
                 max_cuts: int = 200):
    """Minimize ``sum P log P + h(P) - P . L`` over the simplex.

    Simplicial decomposition on the dual ``min_{kappa in K} LSE(L - kappa)``:
    each oracle call to :meth:`ColumnBall.worst_case` adds an extreme
    ``kappa``; the master reweights the collected ones. Stops when
    ``gamma * (P . kappa_new - P . kappa) <= tol``.

    Returns ``(log_z, kappa, policy_column, info)`` with ``log_z = LSE(L - kappa)``.
    """
    atoms = []
    P = softmax(L)
    wc = ball.worst_case(P)
    atoms.append(wc.kappa)
    mu = np.ones(1)
    kappa = wc.kappa
    gap = np.inf
    for _ in range(max_cuts):
        P = softmax(L - kappa)
        wc = ball.worst_case(P)
        gap = float(P @ wc.kappa - P @ kappa)
        if gamma * gap <= tol:
            break
        atoms.append(wc.kappa)
        K = np.array(atoms)
        mu = _master(K, L, np.r_[mu, 0.0])
        kappa = mu @ K
    else:
        raise NumericalError(f"cutting planes stopped at gap {gamma * gap:.3g} after {max_cuts} cuts")
    info = {"lambda_star": wc.lambda_star, "worst_case": float(P @ wc.kappa),
            "cuts_used": len(atoms), "gap": gamma * max(gap, 0.0), "fast_path": wc.fast_path}
    return float(logsumexp(L - kappa)), kappa, P, info


def _master(K: np.ndarray, L: np.ndarray, mu0: np.ndarray) -> np.ndarray:
    """``argmin_{mu in simplex} LSE(L - K^T mu)``."""
    m = len(K)

    def fun(mu):
        s = L - mu @ K
        val = logsumexp(s)
        return val, -(K @ np.exp(s - val))

    res = minimize(fun, mu0, jac=True, method="SLSQP", bounds=[(0.0, 1.0)] * m,
                   constraints=[{"type": "eq", "fun": lambda mu: mu.sum() - 1.0,
                                 "jac": lambda mu: np.ones((1, m))}],
                   options={"ftol": 1e-15, "maxiter": 500})
    mu = np.clip(res.x, 0.0, None)
    return mu / mu.sum()


@dataclass
class WassersteinSolution:
    policy: np.ndarray
    value: ValueFunction
    zterm: ZTerm
    diagnostics: list = field(default_factory=list)


def solve_wasserstein_mdp(samples, psi: float, U, cfg: SolveConfig, mode: str = "weighted",
                          tol: float = 1e-6) -> WassersteinSolution:
    """Robust backward induction with a per-column Wasserstein ball.

    ``weighted``: the worst case is taken of the policy-weighted loss
    ``sum_a P[a] (-log v_a)`` at every ``(t, b)``, solved by cutting planes.
    ``literal``: the unweighted loss ``sum_a -log v_a`` gives one constant
    per column, so the policy is ``P ∝ z_{t+1}`` on the sample support.

    The result is expressed as a time-varying :class:`ZTerm` with ``B`` the
    support indicator and ``Z = gamma * kappa``, so it can be re-evaluated
    with the generic tools in :mod:`tcldro.dispatch`.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    mats = np.asarray(getattr(samples, "matrices", samples), dtype=float)
    n = mats.shape[1]
    U = check_utility(U, n)
    T = U.shape[0]
    g = cfg.gamma
    balls, supports = column_balls(mats, psi)
    base = np.zeros((T, n, n))
    Z = np.zeros((T, n, n))
    for b, idx in enumerate(supports):
        base[:, idx, b] = 1.0
    log_z = np.empty((T + 1, n))
    log_z[T] = terminal_log_z(U, cfg)
    policy = np.zeros((T, n, n))
    diag = []

    literal = {}
    if mode == "literal":
        for b, ball in enumerate(balls):
            wc = ball.worst_case(None)
            literal[b] = wc
    for t in range(T - 1, -1, -1):
        for b, (ball, idx) in enumerate(zip(balls, supports)):
            L = log_z[t + 1, idx]
            if mode == "literal":
                wc = literal[b]
                kappa = np.full(idx.size, wc.value)
                lz = float(logsumexp(L)) - wc.value
                P = softmax(L)
                info = {"lambda_star": wc.lambda_star, "worst_case": wc.value, "cuts_used": 0}
            else:
                lz, kappa, P, info = solve_column(ball, L, g, tol)
                P = softmax(L - kappa)
            Z[t, idx, b] = g * kappa
            policy[t, idx, b] = P
            log_z[t, b] = lz
            diag.append({"t": t, "beta": b, "lambda_star": info["lambda_star"],
                         "worst_case": info["worst_case"], "n_candidates": ball.n_candidates,
                         "cuts_used": info["cuts_used"]})
        if t >= 1:
            log_z[t] += U[t - 1] / g
    diag.sort(key=lambda r: (r["t"], r["beta"]))
    zterm = ZTerm(base, Z, label=f"wasserstein-{mode}")
    return WassersteinSolution(policy, ValueFunction(log_z, g), zterm, diag)
