import numpy as np
import pytest
from scipy.optimize import linprog

from tcldro import bellman, wasserstein as ws
from tcldro.bellman import SolveConfig
from tcldro.exceptions import ConfigError, DataError


def _random_column(rng, k, N):
    base = rng.dirichlet(np.ones(k) * 2)
    s = base * rng.uniform(0.85, 1.15, size=(N, k))
    return s / s.sum(axis=1, keepdims=True)


def _contains(points, v):
    return np.any(np.max(np.abs(points - v), axis=1) <= 1e-12)


def test_two_state_candidates():
    c = ws.candidate_points([0.2, 0.2], [0.9, 0.9], [0.5, 0.5])
    assert len(c) == 3
    for v in ([0.2, 0.8], [0.8, 0.2], [0.5, 0.5]):
        assert _contains(c, np.array(v))


def test_candidates_feasible_and_contain_sample(rng):
    for _ in range(20):
        S = _random_column(rng, 4, 6)
        lo, hi = S.min(axis=0), S.max(axis=0)
        for y in S:
            c = ws.candidate_points(lo, hi, y)
            assert np.all(c >= lo - 1e-9) and np.all(c <= hi + 1e-9)
            assert np.allclose(c.sum(axis=1), 1.0, atol=1e-9)
            assert _contains(c, y)


def test_eight_state_count():
    rng = np.random.default_rng(1)
    S = _random_column(rng, 8, 10)
    c = ws.candidate_points(S.min(axis=0), S.max(axis=0), S[0])
    assert 0 < len(c) <= 8 * 3 ** 7


def test_empty_box():
    with pytest.raises(DataError):
        ws.candidate_points([0.6, 0.6], [0.9, 0.9], [0.6, 0.6])


def test_inner_sup_limits(rng):
    S = _random_column(rng, 3, 5)
    lo, hi = S.min(axis=0), S.max(axis=0)
    for y in S:
        c = ws.candidate_points(lo, hi, y)
        v0, _ = ws.inner_sup(0.0, y, c)
        assert v0 == pytest.approx(ws.neglog(c).sum(axis=1).max())
        big, _ = ws.inner_sup(1e9, y, c)
        assert big == pytest.approx(ws.neglog(y).sum(), abs=1e-9)


def test_inner_sup_ties_first():
    c = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert ws.inner_sup(0.0, [0.5, 0.5], c)[1] == 0


def test_inner_sup_sampling_audit(rng):
    for _ in range(10):
        S = _random_column(rng, 3, 4)
        lo, hi = S.min(axis=0), S.max(axis=0)
        y, w, lam = S[0], rng.uniform(0, 1, 3), rng.uniform(0, 5)
        best, _ = ws.inner_sup(lam, y, ws.candidate_points(lo, hi, y), w)
        pts = lo + rng.uniform(size=(20000, 3)) * (hi - lo)
        pts = pts[:, :2]
        v = np.column_stack([pts, 1 - pts.sum(axis=1)])
        v = v[(v[:, 2] > lo[2]) & (v[:, 2] < hi[2])]
        vals = ws.neglog(v) @ w - lam * np.abs(v - y).sum(axis=1)
        assert vals.max() <= best + 1e-9


def test_g_nonincreasing_and_h_convex(rng):
    S = _random_column(rng, 4, 8)
    ball = ws.ColumnBall(S, 0.01)
    w = rng.uniform(0, 1, 4)
    lams = np.sort(rng.uniform(0, 10, 30))
    y = S[2]
    c = ws.candidate_points(ball.lo, ball.hi, y)
    g = [ws.inner_sup(l, y, c, w)[0] for l in lams]
    assert all(a >= b - 1e-12 for a, b in zip(g, g[1:]))
    for _ in range(50):
        a, b = rng.uniform(0, 10, 2)
        assert ball.h(0.5 * (a + b), w) <= 0.5 * (ball.h(a, w) + ball.h(b, w)) + 1e-12


def test_psi_zero_is_sample_average(rng):
    for w in (None, rng.uniform(0, 1, 4)):
        S = _random_column(rng, 4, 10)
        ball = ws.ColumnBall(S, 0.0)
        assert ball.worst_case(w).value == pytest.approx(ball.sample_loss(w), abs=1e-6)


def test_large_psi_is_max_loss(rng):
    S = _random_column(rng, 4, 10)
    lam, val = ws.lambda_search(10.0, S)
    v = ws.box_vertices(S.min(axis=0), S.max(axis=0))
    assert lam == 0.0 and val == pytest.approx(ws.neglog(v).sum(axis=1).max())


def test_lambda_search_minimizes_h(rng):
    S = _random_column(rng, 3, 6)
    ball = ws.ColumnBall(S, 0.02)
    wc = ball.worst_case()
    grid = np.linspace(0, 4 * max(wc.lambda_star, 1.0), 4001)
    assert wc.value <= min(ball.h(l) for l in grid) + 1e-12
    assert wc.value == pytest.approx(ball.h(wc.lambda_star), abs=1e-10)


def _primal_lp(S, psi, w):
    """Transport each sample to points of the pooled candidate set; maximize the loss."""
    lo, hi = S.min(axis=0), S.max(axis=0)
    V = np.vstack([ws.candidate_points(lo, hi, y) for y in S])
    N, K = len(S), len(V)
    loss = ws.neglog(V) @ w
    dist = np.abs(V[None] - S[:, None]).sum(axis=2)
    A_eq = np.kron(np.eye(N), np.ones((1, K)))
    res = linprog(-np.tile(loss, N) / N, A_ub=dist.ravel()[None] / N, b_ub=[psi],
                  A_eq=A_eq, b_eq=np.ones(N), bounds=(0, None))
    assert res.status == 0
    return -res.fun


def test_worst_case_matches_primal_lp(rng):
    for _ in range(15):
        k = rng.integers(2, 5)
        S = _random_column(rng, k, rng.integers(2, 7))
        w = rng.uniform(0, 1, k)
        psi = rng.uniform(0, 0.1)
        wc = ws.ColumnBall(S, psi).worst_case(w)
        assert wc.value == pytest.approx(_primal_lp(S, psi, w), abs=1e-9)
        # kappa supports the value at these weights
        assert w @ wc.kappa == pytest.approx(wc.value, abs=1e-9)


def test_column_ball_validation():
    with pytest.raises(ConfigError):
        ws.ColumnBall([[0.5, 0.5]], -1.0)
    with pytest.raises(DataError):
        ws.ColumnBall([[0.5, 0.6]], 0.1)


def _two_state_samples(rng, N=5):
    s = np.clip(0.6 + rng.uniform(-0.08, 0.08, (N, 2)), 0.01, 0.99)
    mats = np.empty((N, 2, 2))
    mats[:, 0, :] = s
    mats[:, 1, :] = 1 - s
    return mats


def test_weighted_stage_against_grid_search():
    rng = np.random.default_rng(8)
    mats = _two_state_samples(rng)
    psi, g = 0.02, 1.0
    U = np.array([[0.3, -0.4]])
    sol = ws.solve_wasserstein_mdp(mats, psi, U, SolveConfig(g))
    phi_next = -U[0]
    ps = np.linspace(0, 1, 1001)
    lams = np.arange(0, 5, 1e-3)
    for b in range(2):
        S = mats[:, :, b]
        lo, hi = S.min(axis=0), S.max(axis=0)
        cands = [ws.candidate_points(lo, hi, y) for y in S]
        best = np.inf
        for p in ps:
            P = np.array([p, 1 - p])
            ent = np.sum(P[P > 0] * np.log(P[P > 0]))
            g_avg = np.mean([np.max((ws.neglog(c) @ P)[:, None] - lams[None] *
                                    np.abs(c - y).sum(axis=1)[:, None], axis=0)
                             for c, y in zip(cands, S)], axis=0)
            best = min(best, g * (ent + np.min(lams * psi + g_avg)) + P @ phi_next)
        assert sol.value.phi[0, b] == pytest.approx(best, abs=2e-3)
        assert sol.value.phi[0, b] <= best + 1e-6


def test_weighted_stage_beats_random_pairs():
    rng = np.random.default_rng(21)
    mats = _two_state_samples(rng, 4)
    psi, g = 0.01, 0.5
    U = np.array([[0.1, 0.2]])
    sol = ws.solve_wasserstein_mdp(mats, psi, U, SolveConfig(g))
    for b in range(2):
        ball = ws.ColumnBall(mats[:, :, b], psi)
        p = rng.uniform(size=100_000)
        lam = rng.uniform(0, 3, size=100_000)
        _, costs, dist, owner, starts = ball.candidates
        best = np.inf
        for chunk in np.array_split(np.arange(p.size), 50):
            P = np.column_stack([p[chunk], 1 - p[chunk]])
            score = P @ costs.T - lam[chunk, None] * dist[None]
            gy = np.maximum.reduceat(score, starts, axis=1).mean(axis=1)
            ent = (P * np.log(P)).sum(axis=1)
            best = min(best, np.min(g * (ent + lam[chunk] * psi + gy) - P @ U[0]))
        assert sol.value.phi[0, b] <= best + 1e-6


def test_psi_zero_identical_samples_is_standard(rng):
    P = np.array([[0.7, 0.2, 0.0], [0.3, 0.5, 0.4], [0.0, 0.3, 0.6]])
    U = rng.normal(size=(3, 3))
    cfg = SolveConfig(0.4)
    sol = ws.solve_wasserstein_mdp(np.stack([P] * 5), 0.0, U, cfg)
    std, _ = bellman.solve(bellman.z_term_standard(P), U, cfg)
    assert np.max(np.abs(sol.policy - std)) <= 1e-6


def test_literal_mode(rng):
    mats = _two_state_samples(rng, 6)
    U = rng.normal(size=(3, 2))
    cfg = SolveConfig(0.5)
    sol = ws.solve_wasserstein_mdp(mats, 0.05, U, cfg, mode="literal")
    # the constant per column does not tilt the policy
    for t in range(3):
        z = sol.value.z[t + 1]
        assert np.allclose(sol.policy[t], (z / z.sum())[:, None], atol=1e-12)
    const = [ws.ColumnBall(mats[:, :, b], 0.05).worst_case().value for b in range(2)]
    assert sol.zterm.surcharge[0, 0, 1] == pytest.approx(cfg.gamma * const[1])


def test_objective_monotone_in_psi(rng):
    mats = _two_state_samples(rng, 6)
    U = rng.normal(size=(3, 2))
    rho0 = np.array([0.5, 0.5])
    vals = [rho0 @ ws.solve_wasserstein_mdp(mats, psi, U, SolveConfig(0.3)).value.phi[0]
            for psi in (0.0, 0.01, 0.05, 0.5, 1.0, 2.0)]
    assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))


def test_diagnostics_and_mode_check(rng):
    mats = _two_state_samples(rng, 3)
    sol = ws.solve_wasserstein_mdp(mats, 0.01, np.zeros((2, 2)), SolveConfig(1.0))
    assert [(r["t"], r["beta"]) for r in sol.diagnostics] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    with pytest.raises(ConfigError):
        ws.solve_wasserstein_mdp(mats, 0.01, np.zeros((2, 2)), SolveConfig(1.0), mode="other")
