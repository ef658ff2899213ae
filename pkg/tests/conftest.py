import numpy as np
import pytest

from tcldro import config, pipeline


@pytest.fixture(scope="session")
def scenario():
    """Default scenario: 1000 devices, 8 states, 24 steps, 1000 perturbed samples."""
    return pipeline.build_scenario(config.load_config())


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_stochastic(rng, n, zero_prob=0.0):
    """Random column-stochastic matrix with optional structural zeros (never an empty column)."""
    P = rng.dirichlet(np.ones(n), size=n).T
    if zero_prob > 0:
        mask = rng.random((n, n)) < zero_prob
        mask[rng.integers(n, size=n), np.arange(n)] = False
        P[mask] = 0.0
        P /= P.sum(axis=0)
    return P
