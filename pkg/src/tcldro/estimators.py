"""Estimator-style wrappers around the solvers.

``TransitionEstimator`` learns a discretization and default matrix from an
aggregate power trace. The policy estimators take a set of observed default
matrices plus a utility table in ``fit`` and expose the solved policy;
``predict(rho0)`` returns the distribution path and ``cost(rho0)`` the
method's own objective.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import bellman, dispatch, markov, moment, stats, wasserstein
from ._validation import as_sample_matrices, check_in_range, check_positive
from .exceptions import ConfigError


class TransitionEstimator(TransformerMixin, BaseEstimator):
    """Uniform power bins and a lag-``lag`` maximum-likelihood transition matrix.

    ``thin`` keeps every ``thin``-th sample of the trace before counting.
    """

    def __init__(self, n_states: int = 8, lag: int = 1, thin: int = 1, smoothing: float = 0.0):
        self.n_states = n_states
        self.lag = lag
        self.thin = thin
        self.smoothing = smoothing

    def fit(self, power, y=None):
        series = markov.thin(np.asarray(power, dtype=float).ravel(), self.thin)
        self.state_space_, states = markov.discretize(series, self.n_states)
        self.transition_matrix_ = markov.estimate_transitions(states, self.n_states, self.lag,
                                                              self.smoothing)
        self.occupancy_ = np.bincount(states, minlength=self.n_states) / states.size
        self.final_state_ = int(states[-1])
        return self

    def transform(self, power):
        check_is_fitted(self, "state_space_")
        return self.state_space_.assign(power)


class _PolicyEstimator(BaseEstimator):
    """Shared fit/predict plumbing; subclasses implement ``_solve``."""

    method = ""

    def fit(self, samples, utility, **solve_params):
        check_positive(self.gamma, "gamma")
        if self.terminal not in bellman.TERMINAL_RULES:
            raise ConfigError(f"terminal must be one of {bellman.TERMINAL_RULES}")
        mats = as_sample_matrices(samples)
        self.n_states_ = mats.shape[1]
        self.utility_ = bellman.check_utility(utility, self.n_states_)
        self.config_ = bellman.SolveConfig(self.gamma, self.terminal, getattr(self, "eta", 0.0))
        self._solve(mats, **solve_params)
        return self

    def predict(self, rho0):
        """Distribution path ``rho_0..rho_T`` under the fitted policy."""
        check_is_fitted(self, "policy_")
        return dispatch.forward_evolve(rho0, self.policy_)

    def cost(self, rho0, rho=None) -> float:
        """The method's objective for initial distribution ``rho0``."""
        check_is_fitted(self, "policy_")
        return dispatch.expected_cost(self.policy_, self.zterm_, self.utility_, self.config_, rho0, rho)

    def dispatch(self, rho0, p_rated_state, samples=None) -> dispatch.DispatchResult:
        """Distribution path, power profile and objective as a :class:`DispatchResult`.

        With ``samples`` the out-of-sample mean and worst cost are attached.
        """
        rho = self.predict(rho0)
        res = dispatch.DispatchResult(
            method=self.method, gamma=float(self.gamma), objective=self.cost(rho0, rho),
            policy=self.policy_, rho=rho, power=dispatch.power_profile(rho, p_rated_state),
            params=self._report_params(), diagnostics=getattr(self, "diagnostics_", {}))
        if samples is not None:
            oos = dispatch.out_of_sample_costs(self.policy_, samples, self.utility_, self.config_, rho0)
            res.oos_mean, res.oos_worst = float(oos.mean()), float(oos.max())
        return res

    def _report_params(self) -> dict:
        keys = ("eta", "xi", "varsigma", "b", "c", "psi", "mode")
        return {k: v for k, v in self.get_params().items() if k in keys}


class StandardPolicy(_PolicyEstimator):
    """Closed-form policy with the sample-mean default matrix and no uncertainty term."""

    method = "standard"

    def __init__(self, gamma: float = 0.1, terminal: str = "utility"):
        self.gamma = gamma
        self.terminal = terminal

    def _solve(self, mats):
        mean = mats.mean(axis=0)
        self.zterm_ = bellman.z_term_standard(mean)
        self.policy_, self.value_ = bellman.solve(self.zterm_, self.utility_, self.config_)


class StochasticPolicy(_PolicyEstimator):
    """Normal-entry model: Taylor variance penalty ``exp(-var / (2 mean^2))``."""

    method = "stochastic"

    def __init__(self, gamma: float = 0.1, terminal: str = "utility", variant: str = "linear",
                 pooled: bool = False):
        self.gamma = gamma
        self.terminal = terminal
        self.variant = variant
        self.pooled = pooled

    def _solve(self, mats):
        self.moments_ = markov.sample_moments(mats)
        self.zterm_ = bellman.z_term_stochastic(self.moments_, self.gamma, self.variant, self.pooled)
        self.policy_, self.value_ = bellman.solve(self.zterm_, self.utility_, self.config_)


class RobustPolicy(_PolicyEstimator):
    """Worst case over t / chi-square confidence boxes on mean and variance."""

    method = "dro"

    def __init__(self, gamma: float = 0.1, varsigma: float = 0.1, xi: float = 0.001,
                 terminal: str = "utility", variance_lower: str = "inner", variant: str = "linear"):
        self.gamma = gamma
        self.varsigma = varsigma
        self.xi = xi
        self.terminal = terminal
        self.variance_lower = variance_lower
        self.variant = variant

    def _solve(self, mats):
        self.moments_ = markov.sample_moments(mats)
        self.bounds_ = stats.confidence_bounds(self.moments_, mats.shape[0], self.varsigma, self.xi,
                                               self.variance_lower)
        self.zterm_ = bellman.z_term_dro(self.bounds_, self.gamma, support=self.moments_.mean > 0,
                                         variant=self.variant)
        self.policy_, self.value_ = bellman.solve(self.zterm_, self.utility_, self.config_)


class HybridPolicy(_PolicyEstimator):
    """``(1 - eta) * robust + eta * stochastic``; cost weighs the two objectives alike."""

    method = "hybrid"

    def __init__(self, gamma: float = 0.1, eta: float = 0.5, varsigma: float = 0.1, xi: float = 0.001,
                 terminal: str = "utility", variance_lower: str = "inner", variant: str = "linear"):
        self.gamma = gamma
        self.eta = eta
        self.varsigma = varsigma
        self.xi = xi
        self.terminal = terminal
        self.variance_lower = variance_lower
        self.variant = variant

    def _solve(self, mats):
        check_in_range(self.eta, "eta", 0.0, 1.0)
        common = dict(gamma=self.gamma, terminal=self.terminal, variant=self.variant)
        self.robust_ = RobustPolicy(varsigma=self.varsigma, xi=self.xi,
                                    variance_lower=self.variance_lower, **common)
        self.stochastic_ = StochasticPolicy(**common)
        self.robust_.fit(mats, self.utility_)
        self.stochastic_.fit(mats, self.utility_)
        self.zterm_ = self.robust_.zterm_
        self.policy_ = bellman.hybrid_policy(self.robust_.policy_, self.stochastic_.policy_, self.eta)

    def cost(self, rho0, rho=None) -> float:
        check_is_fitted(self, "policy_")
        if rho is None:
            rho = self.predict(rho0)
        o_wc = dispatch.expected_cost(self.policy_, self.robust_.zterm_, self.utility_, self.config_,
                                      rho0, rho)
        o_e = dispatch.expected_cost(self.policy_, self.stochastic_.zterm_, self.utility_,
                                     self.config_, rho0, rho)
        return (1.0 - self.eta) * o_wc + self.eta * o_e


class MomentRobustPolicy(_PolicyEstimator):
    """Worst case over distributions with bounded mean shift ``b`` and variance factor ``c``."""

    method = "moment"

    def __init__(self, gamma: float = 0.1, b: float = 0.1, c: float = 2.0,
                 grid_size: int = moment.DEFAULT_GRID_SIZE, route: str = "dual",
                 grid_params: tuple | None = None, terminal: str = "utility"):
        self.gamma = gamma
        self.b = b
        self.c = c
        self.grid_size = grid_size
        self.route = route
        self.grid_params = grid_params
        self.terminal = terminal

    def _solve(self, mats, table=None):
        # a precomputed worst-case table (it does not depend on gamma) skips the LPs
        self.moments_ = markov.sample_moments(mats)
        sol = moment.solve_moment_mdp(self.moments_, self.b, self.c, self.utility_, self.config_,
                                      self.grid_size, table=table, route=self.route,
                                      grid_params=self.grid_params)
        self.table_ = sol.table
        self.zterm_ = sol.zterm
        self.policy_, self.value_ = sol.policy, sol.value
        self.diagnostics_ = sol.diagnostics

    def _report_params(self):
        return {"b": self.b, "c": self.c}


class WassersteinRobustPolicy(_PolicyEstimator):
    """Per-column Wasserstein ball of radius ``psi`` around the observed columns."""

    method = "wasserstein"

    def __init__(self, gamma: float = 0.1, psi: float = 0.5, mode: str = "weighted",
                 tol: float = 1e-6, terminal: str = "utility"):
        self.gamma = gamma
        self.psi = psi
        self.mode = mode
        self.tol = tol
        self.terminal = terminal

    def _solve(self, mats):
        sol = wasserstein.solve_wasserstein_mdp(mats, self.psi, self.utility_, self.config_,
                                                self.mode, self.tol)
        self.zterm_ = sol.zterm
        self.policy_, self.value_ = sol.policy, sol.value
        self.diagnostics_ = {"columns": sol.diagnostics}


METHODS = {
    "standard": StandardPolicy,
    "stochastic": StochasticPolicy,
    "dro": RobustPolicy,
    "hybrid": HybridPolicy,
    "moment": MomentRobustPolicy,
    "wasserstein": WassersteinRobustPolicy,
}


def make_policy(method: str, **params) -> _PolicyEstimator:
    """Build a policy estimator by method name, ignoring parameters it does not take."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    cls = METHODS[method]
    accepted = cls._get_param_names()
    return cls(**{k: v for k, v in params.items() if k in accepted and v is not None})
