import numpy as np
import pytest
from scipy.optimize import linprog, minimize
from scipy.special import expit

from tcldro import bellman, moment
from tcldro.bellman import SolveConfig
from tcldro.dispatch import expected_cost
from tcldro.exceptions import DataError
from tcldro.markov import MomentMatrices
from tcldro.moment import MomentAmbiguity

from conftest import random_stochastic


def _scipy_primal(amb):
    w = amb.grid
    res = linprog(np.log(w), A_ub=np.vstack([-w, w, (w - amb.m) ** 2]),
                  b_ub=[amb.b - amb.m, amb.m + amb.b, amb.c * amb.sigma2],
                  A_eq=np.ones((1, w.size)), b_eq=[1.0], bounds=[(0, None)] * w.size)
    assert res.status == 0
    return -res.fun


def test_point_mass_when_set_is_degenerate():
    amb = MomentAmbiguity(0.3, 0.0, 0.0, 2.0, np.array([0.1, 0.3, 0.5]))
    val, q = moment.worst_case_neglog_primal(amb)
    assert val == pytest.approx(-np.log(0.3), abs=1e-12)
    assert q == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)


def test_unconstrained_set_picks_smallest_point():
    grid = np.linspace(0.1, 0.9, 9)
    amb = MomentAmbiguity(0.5, 1.0, 1.0, 1.0, grid)
    assert moment.worst_case_neglog_primal(amb)[0] == pytest.approx(-np.log(0.1), abs=1e-12)
    assert moment.worst_case_neglog_dual(amb).value == pytest.approx(-np.log(0.1), abs=1e-9)


def test_reference_instance_duality():
    amb = MomentAmbiguity(0.5, 0.01, 0.1, 2.0, np.linspace(0.05, 0.95, 201))
    p = moment.worst_case_neglog_primal(amb)[0]
    d = moment.worst_case_neglog_dual(amb)
    assert abs(p - d.value) <= 1e-6
    assert d.residual(amb).min() >= -1e-8
    assert p == pytest.approx(_scipy_primal(amb), abs=1e-8)
    # the worst case exceeds the nominal loss
    assert p > -np.log(0.5)


def test_random_instances_match_scipy():
    rng = np.random.default_rng(17)
    for _ in range(30):
        m = rng.uniform(0.05, 0.95)
        amb = MomentAmbiguity(m, rng.uniform(0, 0.02), rng.uniform(0, 0.2), rng.uniform(1, 3),
                              np.unique(np.r_[np.linspace(max(1e-3, m - 0.4), min(1, m + 0.4), 41), m]))
        assert moment.worst_case_neglog_primal(amb)[0] == pytest.approx(_scipy_primal(amb), abs=1e-8)


def test_default_grid():
    g = moment.default_grid(0.37, 0.001, 0.05, 2.0, 11)
    assert 0.37 in g and np.all(np.diff(g) > 0)
    assert g.min() >= moment.GRID_FLOOR and g.max() <= 1.0
    assert np.array_equal(moment.default_grid(0.4, 0.0, 0.0, 2.0), [0.4])


def test_infeasible_grid():
    amb = MomentAmbiguity(0.5, 0.0, 0.0, 1.0, np.array([0.1, 0.2]))
    with pytest.raises(DataError, match="widen the grid"):
        moment.worst_case_neglog_primal(amb)


def test_worst_case_monotone_in_parameters():
    grid = np.linspace(0.05, 0.95, 101)
    vals = [moment.worst_case_neglog_primal(MomentAmbiguity(0.5, 0.01, b, 2.0, grid))[0]
            for b in (0.0, 0.05, 0.1, 0.2)]
    assert all(x <= y + 1e-12 for x, y in zip(vals, vals[1:]))
    vals = [moment.worst_case_neglog_primal(MomentAmbiguity(0.5, 0.01, 0.1, c, grid))[0]
            for c in (0.5, 1.0, 2.0, 3.0)]
    assert all(x <= y + 1e-12 for x, y in zip(vals, vals[1:]))


def test_effective_z_for_nominal_worst_case():
    P = np.array([[0.7, 0.2], [0.3, 0.8]])
    zt = moment.moment_effective_zterm(-np.log(P), P, 0.5)
    assert np.allclose(zt.surcharge, 0.0, atol=1e-15)


def test_larger_worst_case_lowers_weight():
    P = np.array([[0.5, 0.5], [0.5, 0.5]])
    lo = moment.moment_effective_zterm(np.full((2, 2), 0.8), P, 1.0)
    hi = moment.moment_effective_zterm(np.array([[1.2, 0.8], [0.8, 0.8]]), P, 1.0)
    assert np.exp(-hi.surcharge[0, 0]) < np.exp(-lo.surcharge[0, 0])


def test_degenerate_set_gives_standard_policy(rng):
    P = random_stochastic(rng, 4, zero_prob=0.3)
    U = rng.normal(size=(4, 4))
    cfg = SolveConfig(0.3)
    sol = moment.solve_moment_mdp(MomentMatrices(P, np.zeros_like(P), 10), 0.0, 2.0, U, cfg)
    std, _ = bellman.solve(bellman.z_term_standard(P), U, cfg)
    assert np.max(np.abs(sol.policy - std)) <= 1e-9


def test_primal_and_dual_routes_agree(rng):
    P = random_stochastic(rng, 3)
    var = rng.uniform(1e-4, 1e-3, P.shape)
    mom = MomentMatrices(P, var, 100)
    U = rng.normal(size=(3, 3))
    a = moment.solve_moment_mdp(mom, 0.05, 2.0, U, SolveConfig(0.5), grid_size=51, route="dual")
    b = moment.solve_moment_mdp(mom, 0.05, 2.0, U, SolveConfig(0.5), grid_size=51, route="primal")
    assert np.max(np.abs(a.policy - b.policy)) <= 1e-6
    assert a.diagnostics["max_duality_gap"] <= 1e-6


def test_monolithic_oracle_two_states():
    """Min over all policies of the single-level objective, worst cases from scipy LPs."""
    rng = np.random.default_rng(5)
    P = np.array([[0.6, 0.3], [0.4, 0.7]])
    var = np.full((2, 2), 0.002)
    b, c, g = 0.05, 2.0, 0.7
    U = rng.normal(size=(2, 2))
    rho0 = np.array([0.4, 0.6])
    wc = np.empty((2, 2))
    for a in range(2):
        for bb in range(2):
            amb = MomentAmbiguity(P[a, bb], var[a, bb], b, c,
                                  moment.default_grid(P[a, bb], var[a, bb], b, c, 101))
            wc[a, bb] = _scipy_primal(amb)

    def objective(x):
        p = expit(x).reshape(2, 2)  # probability of landing in state 0, per (t, origin)
        cost, rho = 0.0, rho0
        for t in range(2):
            Pt = np.vstack([p[t], 1 - p[t]])
            stage = g * (Pt * (np.log(Pt) + wc)).sum(axis=0) - U[t] @ Pt
            cost += rho @ stage
            rho = Pt @ rho
        return cost

    best = min(minimize(objective, x0, method="BFGS", options={"gtol": 1e-11}).fun
               for x0 in rng.normal(size=(4, 4)))
    mom = MomentMatrices(P, var, 100)
    sol = moment.solve_moment_mdp(mom, b, c, U, SolveConfig(g), grid_size=101)
    assert rho0 @ sol.value.phi[0] == pytest.approx(best, abs=1e-6)
    assert expected_cost(sol.policy, sol.zterm, U, SolveConfig(g), rho0) == pytest.approx(best, abs=1e-6)


def test_table_rows():
    P = np.array([[1.0, 0.4], [0.0, 0.6]])
    var = np.array([[0.0, 1e-3], [0.0, 1e-3]])
    tab = moment.worst_case_table(MomentMatrices(P, var, 50), 0.05, 2.0, 31)
    rows = list(tab.rows())
    assert len(rows) == 3 and np.isnan(tab.primal[1, 0])
    assert max(r["gap"] for r in rows) <= 1e-6


def test_dense_grid_search_two_states():
    """Exhaustive policy grid at resolution 1e-3; stage 1 separates per origin column."""
    P = np.array([[0.55, 0.25], [0.45, 0.75]])
    var = np.full((2, 2), 0.003)
    b, c, g = 0.05, 2.0, 1.0
    U = np.array([[0.4, -0.1], [-0.3, 0.2]])
    rho0 = np.array([0.7, 0.3])
    sol = moment.solve_moment_mdp(MomentMatrices(P, var, 100), b, c, U, SolveConfig(g), grid_size=101)
    wc = sol.table.dual
    p = np.linspace(1e-9, 1 - 1e-9, 1001)
    cols = np.stack([p, 1 - p])  # (2, K): landing probabilities for each grid point

    def stage(t, beta):
        return g * (cols * (np.log(cols) + wc[:, [beta]])).sum(axis=0) - U[t] @ cols

    tail = [stage(1, beta).min() for beta in range(2)]
    c0 = [stage(0, beta) for beta in range(2)]
    # rho_1 = P_0 rho_0, so the second-stage cost is linear in the first-stage columns
    best = np.inf
    for i in range(p.size):
        rho1 = cols[:, [i]] * rho0[0] + cols * rho0[1]
        total = rho0[0] * c0[0][i] + rho0[1] * c0[1] + rho1.T @ tail
        best = min(best, total.min())
    assert rho0 @ sol.value.phi[0] == pytest.approx(best, abs=1e-3)
    assert rho0 @ sol.value.phi[0] <= best + 1e-9


def test_nested_grids_never_decrease_worst_case():
    m, s2 = 0.4, 0.004
    prev = -np.inf
    for half in (0.05, 0.1, 0.2, 0.3):
        grid = np.unique(np.r_[np.linspace(m - half, m + half, 4 * int(half * 100) + 1), m])
        val = moment.worst_case_neglog_primal(MomentAmbiguity(m, s2, 0.1, 2.0, grid))[0]
        assert val >= prev - 1e-12
        prev = val
