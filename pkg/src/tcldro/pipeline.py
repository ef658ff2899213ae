"""End-to-end scenario construction and the table sweeps."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import bellman, markov, moment
from .config import ScenarioConfig
from .estimators import MomentRobustPolicy, TransitionEstimator, make_policy
from .exceptions import ConfigError
from .thermal import EnsembleTrace, simulate_ensemble

GAMMAS = (0.05, 0.1, 1.0)
ETAS = (0.0, 0.25, 0.5, 0.75, 1.0)
CONFIDENCE = (0.1, 0.01, 0.001)
B_GRID = (0.05, 0.1, 0.2)
C_GRID = (1.5, 2.0, 3.0)
PSI_GRID = (0.5, 1.0, 2.0)


@dataclass
class Scenario:
    config: ScenarioConfig
    power: np.ndarray
    estimator: TransitionEstimator
    samples: markov.SampleSet
    utility: np.ndarray
    rho0: np.ndarray

    @property
    def space(self) -> markov.StateSpace:
        return self.estimator.state_space_

    @property
    def nominal(self) -> np.ndarray:
        return self.estimator.transition_matrix_


def simulate(cfg: ScenarioConfig) -> EnsembleTrace:
    return simulate_ensemble(cfg.tcl, cfg.ensemble.M, cfg.ambient(), cfg.sim_steps, seed=cfg.seed)


def fit_transitions(cfg: ScenarioConfig, power) -> TransitionEstimator:
    m = cfg.model
    return TransitionEstimator(m.n_states, m.lag, m.thin, m.smoothing).fit(power)


def initial_distribution(kind: str, est: TransitionEstimator) -> np.ndarray:
    n = est.n_states
    if kind == "final":
        return np.eye(n)[est.final_state_]
    if kind == "occupancy":
        return est.occupancy_.copy()
    if kind == "uniform":
        return np.full(n, 1.0 / n)
    raise ConfigError(f"unknown initial distribution {kind!r}")


def draw_samples(cfg: ScenarioConfig, nominal) -> markov.SampleSet:
    # separate stream from the simulator so either stage can be rerun alone
    return markov.perturb_samples(nominal, cfg.samples.fraction, cfg.samples.N, seed=cfg.seed + 1)


def utility_table(cfg: ScenarioConfig, space: markov.StateSpace) -> np.ndarray:
    return bellman.price_utility(cfg.prices(), space.p_rated_state, cfg.model.horizon,
                                 cfg.model.step_hours)


def build_scenario(cfg: ScenarioConfig, power=None, samples=None) -> Scenario:
    """Simulate (unless ``power`` is given), estimate, perturb and set up the utility."""
    if power is None:
        power = simulate(cfg).power
    est = fit_transitions(cfg, power)
    if samples is None:
        samples = draw_samples(cfg, est.transition_matrix_)
    U = utility_table(cfg, est.state_space_)
    return Scenario(cfg, np.asarray(power), est, samples, U,
                    initial_distribution(cfg.model.rho0, est))


def method_params(cfg: ScenarioConfig, **overrides) -> dict:
    m = cfg.method
    params = dict(gamma=m.gamma, eta=m.eta, varsigma=m.varsigma, xi=m.xi, b=m.b, c=m.c,
                  grid_size=m.grid_size, psi=m.psi, mode=m.mode, terminal=m.terminal,
                  variance_lower=m.variance_lower)
    params.update({k: v for k, v in overrides.items() if v is not None})
    return params


def solve_method(sc: Scenario, method: str, with_oos: bool = False, **overrides):
    """Fit one method on the scenario; returns ``(estimator, DispatchResult, seconds)``."""
    params = method_params(sc.config, **overrides)
    est = make_policy(method, **params)
    t0 = time.perf_counter()
    est.fit(sc.samples, sc.utility)
    elapsed = time.perf_counter() - t0
    res = est.dispatch(sc.rho0, sc.space.p_rated_state, sc.samples if with_oos else None)
    res.diagnostics = dict(res.diagnostics, seconds=elapsed)
    return est, res, elapsed


def sweep(sc: Scenario, table: int, gammas=GAMMAS, **grids) -> list:
    """Long-form rows of one parameter sweep.

    ``table=2``: hybrid cost over eta. ``3``: robust cost (eta = 0) over the
    confidence levels xi and varsigma. ``4``: moment cost over b and c, all
    cells sharing one nested support grid per entry. ``5``: Wasserstein cost
    over psi.
    """
    base = dict(terminal=sc.config.method.terminal, variance_lower=sc.config.method.variance_lower)
    rows = []
    if table == 2:
        for g in gammas:
            for eta in grids.get("etas", ETAS):
                _, res, dt = solve_method(sc, "hybrid", gamma=g, eta=eta,
                                          xi=sc.config.method.xi, varsigma=sc.config.method.varsigma,
                                          **base)
                rows.append({"gamma": g, "eta": eta, "objective": res.objective, "seconds": dt})
    elif table == 3:
        levels = grids.get("levels", CONFIDENCE)
        for g in gammas:
            for vs in levels:
                for xi in levels:
                    _, res, dt = solve_method(sc, "dro", gamma=g, xi=xi, varsigma=vs, **base)
                    rows.append({"gamma": g, "varsigma": vs, "xi": xi, "objective": res.objective,
                                 "seconds": dt})
    elif table == 4:
        bs, cs = grids.get("bs", B_GRID), grids.get("cs", C_GRID)
        gp = (max(bs), max(cs))
        mom = markov.sample_moments(sc.samples)
        gsize = sc.config.method.grid_size
        tables = {}
        for b in bs:
            for c in cs:
                t0 = time.perf_counter()
                tables[b, c] = (moment.worst_case_table(mom, b, c, gsize, grid_params=gp),
                                time.perf_counter() - t0)
        for g in gammas:
            for b in bs:
                for c in cs:
                    tab, t_lp = tables[b, c]
                    est = MomentRobustPolicy(gamma=g, b=b, c=c, grid_size=gsize, grid_params=gp,
                                             terminal=base["terminal"])
                    t0 = time.perf_counter()
                    est.fit(sc.samples, sc.utility, table=tab)
                    dt = time.perf_counter() - t0 + t_lp
                    rows.append({"gamma": g, "b": b, "c": c, "objective": est.cost(sc.rho0),
                                 "seconds": dt})
    elif table == 5:
        for g in gammas:
            for psi in grids.get("psis", PSI_GRID):
                _, res, dt = solve_method(sc, "wasserstein", gamma=g, psi=psi,
                                          mode=sc.config.method.mode, terminal=base["terminal"])
                rows.append({"gamma": g, "psi": psi, "objective": res.objective, "seconds": dt})
    else:
        raise ConfigError(f"--table must be 2, 3, 4 or 5, got {table}")
    return rows


WIDE_LAYOUT = {2: (("gamma",), "eta"), 3: (("gamma", "varsigma"), "xi"),
               4: (("gamma", "b"), "c"), 5: (("gamma",), "psi")}


def widen(rows: list, table: int):
    """Pivot long rows to the printed table layout; returns ``(header, rows)``."""
    keys, col = WIDE_LAYOUT[table]
    cols = list(dict.fromkeys(r[col] for r in rows))
    out = {}
    for r in rows:
        out.setdefault(tuple(r[k] for k in keys), {})[r[col]] = r["objective"]
    header = list(keys) + [f"{col}={v:g}" for v in cols]
    body = [list(k) + [cells[v] for v in cols] for k, cells in out.items()]
    return header, body
