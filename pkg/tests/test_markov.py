import numpy as np
import pytest

from tcldro import markov
from tcldro.exceptions import ConfigError, DataError


def test_discretize_two_states():
    space, idx = markov.discretize([0.0, 10.0], 2)
    assert np.allclose(space.bin_edges, [0, 5, 10])
    assert idx.tolist() == [0, 1]
    assert np.allclose(space.p_rated_state, [2.5, 7.5])


def test_discretize_one_per_state():
    _, idx = markov.discretize(np.arange(8) * 700.0, 8)
    assert np.array_equal(np.bincount(idx, minlength=8), np.ones(8))


def test_discretize_constant_series():
    with pytest.raises(DataError):
        markov.discretize([3.0, 3.0, 3.0], 4)


def test_alternation():
    P = markov.estimate_transitions([0, 1, 0, 1, 0], 2)
    assert np.array_equal(P, [[0, 1], [1, 0]])


def test_direct_count():
    # state 1 never leaves, so add one return to keep it visited as an origin
    P = markov.estimate_transitions([0, 0, 0, 1, 1], 2)
    assert P[:, 0] == pytest.approx([2 / 3, 1 / 3])


def test_unvisited_state_named():
    with pytest.raises(DataError, match="state 2"):
        markov.estimate_transitions([0, 1, 0, 1, 2], 3)


def test_zero_counts_stay_zero():
    P = markov.estimate_transitions([0, 1, 2, 1, 0, 1, 2, 2, 1, 0], 3)
    assert P[2, 0] == 0.0 and P[0, 2] == 0.0
    markov.check_stochastic(P)


def test_lag_and_smoothing():
    s = [0, 1, 0, 1, 0, 1]
    assert np.array_equal(markov.estimate_transitions(s, 2, lag=2), np.eye(2))
    P = markov.estimate_transitions(s, 2, smoothing=0.1)
    assert np.all(P > 0)
    assert np.allclose(P.sum(axis=0), 1.0)
    with pytest.raises(ConfigError):
        markov.transition_counts(s, 2, lag=0)


def test_check_stochastic_rejects():
    with pytest.raises(DataError, match="column"):
        markov.check_stochastic([[0.5, 0.5], [0.4, 0.5]])
    with pytest.raises(DataError):
        markov.check_stochastic([[1.2, 0.0], [-0.2, 1.0]])
    with pytest.raises(DataError):
        markov.check_stochastic(np.ones((2, 3)) / 2)


def test_perturb_zero_fraction():
    P = np.array([[0.9, 0.2], [0.1, 0.8]])
    s = markov.perturb_samples(P, 0.0, 10, seed=1)
    assert np.allclose(s.matrices, P[None], atol=1e-15)


def test_perturb_preserves_zeros_and_stochasticity():
    P = np.array([[0.7, 0.0, 0.1], [0.3, 0.6, 0.0], [0.0, 0.4, 0.9]])
    s = markov.perturb_samples(P, 0.15, 200, seed=5)
    assert np.all(s.matrices[:, P == 0] == 0.0)
    assert np.allclose(s.matrices.sum(axis=1), 1.0, atol=1e-12)
    assert np.array_equal(s.support, P > 0)


def test_perturb_mean_close_to_nominal():
    P = np.array([[0.7, 0.05, 0.1], [0.3, 0.6, 0.3], [0.0, 0.35, 0.6]])
    s = markov.perturb_samples(P, 0.15, 1000, seed=0)
    m = markov.sample_moments(s)
    assert np.max(np.abs(m.mean - P)[P > 0]) < 0.02


def test_perturb_variance_scale():
    # dense column: renormalization only mildly shrinks the uniform variance
    P = np.full((4, 4), 0.25)
    v = markov.sample_moments(markov.perturb_samples(P, 0.15, 1000, seed=2)).variance
    ratio = v / ((0.15 * P) ** 2 / 3)
    assert np.all((ratio > 0.5) & (ratio < 2.0))


def test_perturb_variance_delta_method():
    # first-order variance of p_a (1 + u_a) / sum_c p_c (1 + u_c)
    P = np.array([[0.4, 0.1, 0.1, 0.2], [0.3, 0.5, 0.2, 0.2],
                  [0.2, 0.3, 0.6, 0.2], [0.1, 0.1, 0.1, 0.4]])
    v = markov.sample_moments(markov.perturb_samples(P, 0.15, 20000, seed=4)).variance
    s2 = 0.15 ** 2 / 3
    ref = P ** 2 * s2 * ((1 - P) ** 2 + (P ** 2).sum(axis=0) - P ** 2)
    assert np.allclose(v, ref, rtol=0.1)


def test_moments_small_cases():
    P = np.array([[0.6, 0.3], [0.4, 0.7]])
    same = markov.sample_moments(np.stack([P, P, P]))
    assert np.all(same.variance == 0.0)
    Q = np.array([[0.5, 0.3], [0.5, 0.7]])
    two = markov.sample_moments(np.stack([P, Q]))
    assert two.variance[0, 0] == pytest.approx((0.6 - 0.5) ** 2 / 2)


def test_sample_set_zero_pattern():
    A = np.eye(2)
    B = np.array([[0.5, 0.0], [0.5, 1.0]])
    with pytest.raises(DataError, match="zero pattern"):
        markov.SampleSet(np.stack([A, B]))


def test_state_space_round_trip():
    sp = markov.StateSpace.uniform(0.0, 80.0, 8)
    back = markov.StateSpace.from_dict(sp.to_dict())
    assert np.array_equal(back.bin_edges, sp.bin_edges)
    bad = sp.to_dict()
    bad["p_rated_state"][0] = 99.0
    with pytest.raises(DataError):
        markov.StateSpace.from_dict(bad)


def test_thin():
    assert markov.thin(np.arange(10), 3).tolist() == [0, 3, 6, 9]
    with pytest.raises(ConfigError):
        markov.thin([1, 2], 0)


def test_default_trace_properties(scenario):
    _, idx = markov.discretize(scenario.power, 8)
    assert np.all(np.bincount(idx, minlength=8) > 0)
    P = scenario.nominal
    # columns peak on or next to the diagonal
    assert np.all(np.abs(P.argmax(axis=0) - np.arange(8)) <= 1)
