"""Small dense linear-programming solver (two-phase tableau simplex).

Problems are stated as::

    minimize    c @ x
    subject to  A[i] @ x  (<=, =, >=)  b[i]
                lo <= x <= hi

Bounds may be infinite. Entering variables follow Dantzig's rule; after a run
of degenerate pivots the solver switches to Bland's rule, which cannot cycle.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, NumericalError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_SENSES = {"<=": -1, "le": -1, "=": 0, "==": 0, "eq": 0, ">=": 1, "ge": 1}


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    senses: list
    b: np.ndarray
    bounds: list | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        n = self.c.size
        if self.A.size == 0:
            self.A = np.zeros((0, n))
        if self.A.shape != (self.b.size, n):
            raise DataError(f"constraint matrix shape {self.A.shape} does not match "
                            f"{self.b.size} rows x {n} variables")
        if len(self.senses) != self.b.size:
            raise DataError("one sense per constraint row is required")
        for s in self.senses:
            if s not in _SENSES:
                raise DataError(f"unknown constraint sense {s!r}")
        if self.bounds is None:
            self.bounds = [(0.0, np.inf)] * n
        if len(self.bounds) != n:
            raise DataError("one (lo, hi) bound pair per variable is required")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise DataError("LP data must be finite")


@dataclass
class LpResult:
    status: str
    value: float = np.nan
    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Dense tableau in canonical form for the current basis."""

    def __init__(self, T, basis, tol):
        self.T = T            # rows 0..m-1 constraints, last row reduced costs; last column rhs
        self.basis = basis
        self.tol = tol
        self.iterations = 0

    def pivot(self, row, col):
        T = self.T
        T[row] /= T[row, col]
        colv = T[:, col].copy()
        colv[row] = 0.0
        T -= np.outer(colv, T[row])
        self.basis[row] = col
        self.iterations += 1

    def run(self, allowed, max_iter):
        """Minimize the objective row; returns OPTIMAL or UNBOUNDED."""
        T = self.T
        m = T.shape[0] - 1
        degenerate_run = 0
        bland = False
        while True:
            if self.iterations >= max_iter:
                raise NumericalError(f"simplex iteration cap ({max_iter}) exceeded")
            reduced = T[-1, :-1]
            scale = max(1.0, np.abs(reduced[allowed]).max(initial=0.0))
            candidates = np.flatnonzero(allowed & (reduced < -self.tol * scale))
            if candidates.size == 0:
                return OPTIMAL
            if bland:
                col = candidates[0]
            else:
                col = candidates[np.argmin(reduced[candidates])]
            column = T[:m, col]
            pos = column > self.tol
            if not np.any(pos):
                return UNBOUNDED
            ratios = np.full(m, np.inf)
            ratios[pos] = T[:m, -1][pos] / column[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + self.tol * max(1.0, abs(best)))
            # Bland: among tied rows leave the variable with the smallest index
            row = ties[np.argmin(np.asarray(self.basis)[ties])]
            if best <= self.tol:
                degenerate_run += 1
                if degenerate_run > 50:
                    bland = True
            else:
                degenerate_run = 0
            self.pivot(row, col)


def _standardize(problem: LpProblem):
    """Rewrite as  min c'y + const,  A'y (sense) b',  y >= 0.

    Returns the transformed data and a function mapping y back to x.
    """
    c, A = problem.c, problem.A
    n = c.size
    cols = []          # list of (orig index, sign, column in A')
    shift = np.zeros(n)
    extra_rows = []
    k = 0
    for j, (lo, hi) in enumerate(problem.bounds):
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi:
            raise DataError(f"variable {j} has empty bounds [{lo}, {hi}]")
        if np.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((k, hi - lo))
            k += 1
        elif np.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
            k += 1
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
            k += 2
    n_std = k
    A_std = np.zeros((A.shape[0] + len(extra_rows), n_std))
    c_std = np.zeros(n_std)
    for idx, (j, sign) in enumerate(cols):
        A_std[: A.shape[0], idx] = sign * A[:, j]
        c_std[idx] = sign * c[j]
    b_std = problem.b - A @ shift
    senses = [_SENSES[s] for s in problem.senses]
    for r, (idx, ub) in enumerate(extra_rows):
        A_std[A.shape[0] + r, idx] = 1.0
        senses.append(-1)
    b_std = np.concatenate([b_std, [ub for _, ub in extra_rows]])
    const = float(c @ shift)

    def recover(y):
        x = shift.copy()
        for idx, (j, sign) in enumerate(cols):
            x[j] += sign * y[idx]
        return x

    return c_std, A_std, np.array(senses, dtype=int), b_std, const, recover


def lp_solve(problem: LpProblem, tol: float = 1e-10, max_iter: int = 50_000) -> LpResult:
    """Solve ``problem`` with the two-phase simplex method."""
    c, A, senses, b, const, recover = _standardize(problem)
    m, n = A.shape
    if m == 0:
        if np.any(c < 0):
            return LpResult(UNBOUNDED)
        y = np.zeros(n)
        return LpResult(OPTIMAL, const, recover(y))

    # nonnegative right-hand sides
    neg = b < 0
    A = A.copy()
    b = b.copy()
    senses = senses.copy()
    A[neg] *= -1.0
    b[neg] *= -1.0
    senses[neg] *= -1

    n_slack = int(np.count_nonzero(senses != 0))
    n_art = int(np.count_nonzero(senses >= 0))
    width = n + n_slack + n_art
    T = np.zeros((m + 1, width + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    basis = [-1] * m
    s = n
    a = n + n_slack
    art_cols = []
    for i in range(m):
        if senses[i] == -1:
            T[i, s] = 1.0
            basis[i] = s
            s += 1
        elif senses[i] == 1:
            T[i, s] = -1.0
            s += 1
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1
        else:
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1
    art_mask = np.zeros(width, dtype=bool)
    art_mask[art_cols] = True

    tab = _Tableau(T, basis, tol)
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))

    # phase 1: minimize the sum of artificials
    if art_cols:
        T[-1, :] = 0.0
        T[-1, art_cols] = 1.0
        for i in range(m):
            if art_mask[basis[i]]:
                T[-1] -= T[i]
        tab.run(np.ones(width, dtype=bool), max_iter)
        if -T[-1, -1] > 1e-9 * scale:
            return LpResult(INFEASIBLE, iterations=tab.iterations)
        # drive remaining artificials out of the basis, dropping redundant rows
        keep = []
        for i in range(m):
            if art_mask[tab.basis[i]]:
                row = T[i, :width].copy()
                row[art_mask] = 0.0
                j = np.flatnonzero(np.abs(row) > tol)
                if j.size:
                    tab.pivot(i, j[0])
                    keep.append(i)
            else:
                keep.append(i)
        if len(keep) < m:
            rows = keep + [m]
            tab.T = T = T[rows]
            tab.basis = [tab.basis[i] for i in keep]
            m = len(keep)

    # phase 2
    allowed = ~art_mask
    T[-1, :] = 0.0
    T[-1, :n] = c
    for i in range(m):
        j = tab.basis[i]
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[i]
    status = tab.run(allowed, max_iter)
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED, iterations=tab.iterations)
    y = np.zeros(width)
    for i, j in enumerate(tab.basis):
        y[j] = T[i, -1]
    y = np.maximum(y[:n], 0.0)
    x = recover(y)
    value = float(problem.c @ x)
    return LpResult(OPTIMAL, value, x, tab.iterations)
