"""Robust dispatch of thermostatically controlled load ensembles.

The ensemble is modelled as a Markov chain over aggregate-power states whose
controlled transitions pay a KL penalty against the default dynamics. The
package covers simulation, estimation, analytical policies under normal,
confidence-box and hybrid uncertainty models, and numerical policies under
moment and Wasserstein ambiguity.
"""
from .bellman import (SolveConfig, ValueFunction, ZTerm, backward_recursion, hybrid_policy,
                      policy_from_z, price_utility, z_term_dro, z_term_standard, z_term_stochastic)
from .dispatch import (DispatchResult, delta_power, expected_cost, forward_evolve,
                       out_of_sample_costs, power_profile, stage_kl)
from .estimators import (HybridPolicy, MomentRobustPolicy, RobustPolicy, StandardPolicy,
                         StochasticPolicy, TransitionEstimator, WassersteinRobustPolicy, make_policy)
from .exceptions import ConfigError, DataError, DomainError, NumericalError, TclDroError
from .markov import (MomentMatrices, SampleSet, StateSpace, discretize, estimate_transitions,
                     perturb_samples, sample_moments)
from .stats import ConfidenceBounds, chi2_quantile, confidence_bounds, t_quantile
from .thermal import EnsembleTrace, TclParams, TclState, simulate_ensemble, step_tcl

__version__ = "0.1.0"
