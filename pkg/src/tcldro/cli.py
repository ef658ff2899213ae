"""``tcldro`` command line.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 data
error. Failures print one line ``tcldro: <kind>: <message>`` to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io, pipeline
from .bellman import SolveConfig, price_utility
from .config import load_config
from .dispatch import delta_power, out_of_sample_costs, check_distribution
from .estimators import METHODS, make_policy
from .exceptions import ConfigError, DataError, NumericalError

EXIT_CODES = ((ConfigError, 2, "config-error"), (NumericalError, 3, "numerical-failure"),
              (DataError, 4, "data-error"))


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="scenario TOML file")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    return p


def _method_flags(p):
    p.add_argument("--gamma", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--xi", type=float)
    p.add_argument("--varsigma", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--psi", type=float)
    p.add_argument("--grid-size", type=int, dest="grid_size")
    p.add_argument("--mode", choices=("weighted", "literal"))
    p.add_argument("--terminal", choices=("utility", "unit"))
    p.add_argument("--variance-lower", choices=("inner", "standard"), dest="variance_lower")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="tcldro", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate the ensemble")
    p.add_argument("--devices", action="store_true", help="also write per-device temperatures")

    p = sub.add_parser("estimate", parents=[common], help="estimate the default matrix")
    p.add_argument("--trace", type=Path, help="trace CSV (default: OUT/trace.csv)")

    p = sub.add_parser("sample", parents=[common], help="draw perturbed default matrices")
    p.add_argument("--nominal", type=Path, help="matrix CSV (default: OUT/nominal.csv)")
    p.add_argument("--fraction", type=float)
    p.add_argument("--N", type=int, dest="N")

    p = sub.add_parser("solve", parents=[common], help="solve one method")
    p.add_argument("--method", choices=sorted(METHODS), help="default: method.name from config")
    p.add_argument("--samples", type=Path, help="sample CSV (default: OUT/samples.csv)")
    p.add_argument("--tag", help="file name stem for outputs (default: the method name)")
    _method_flags(p)

    p = sub.add_parser("evaluate", parents=[common], help="out-of-sample cost of a policy")
    p.add_argument("--policy", type=Path, required=True)
    p.add_argument("--samples", type=Path, help="sample CSV (default: OUT/samples.csv)")
    p.add_argument("--gamma", type=float)
    p.add_argument("--terminal", choices=("utility", "unit"))

    p = sub.add_parser("report", parents=[common], help="tables and power differences")
    p.add_argument("--table", type=int, choices=(2, 3, 4, 5), help="run a parameter sweep")
    p.add_argument("--results", type=Path, help="directory of dispatch JSON files (default: OUT)")
    return parser


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _utility(cfg, space):
    return price_utility(cfg.prices(), space.p_rated_state, cfg.model.horizon, cfg.model.step_hours)


def cmd_simulate(args):
    cfg = _config(args)
    trace = pipeline.simulate(cfg)
    io.write_trace_csv(args.out / "trace.csv", trace.power)
    if args.devices:
        io.write_temperatures_csv(args.out / "temperatures.csv", trace.theta)


def cmd_estimate(args):
    cfg = _config(args)
    power = io.read_trace_csv(args.trace or args.out / "trace.csv")
    est = pipeline.fit_transitions(cfg, power)
    io.write_matrix_csv(args.out / "nominal.csv", est.transition_matrix_)
    io.write_state_space_json(args.out / "state_space.json", est.state_space_)
    io.write_distribution_csv(args.out / "rho0.csv",
                              pipeline.initial_distribution(cfg.model.rho0, est))


def cmd_sample(args):
    cfg = _config(args)
    if args.fraction is not None:
        cfg.samples.fraction = args.fraction
    if args.N is not None:
        cfg.samples.N = args.N
    cfg.validate()
    nominal = io.read_matrix_csv(args.nominal or args.out / "nominal.csv")
    io.write_samples_csv(args.out / "samples.csv", pipeline.draw_samples(cfg, nominal))


def _load_inputs(args, cfg):
    samples = io.read_samples_csv(args.samples or args.out / "samples.csv")
    space = io.read_state_space_json(args.out / "state_space.json")
    rho0 = check_distribution(io.read_distribution_csv(args.out / "rho0.csv")[0], space.n)
    return samples, space, rho0


def cmd_solve(args):
    cfg = _config(args)
    samples, space, rho0 = _load_inputs(args, cfg)
    method = args.method or cfg.method.name
    overrides = {k: getattr(args, k) for k in ("gamma", "eta", "xi", "varsigma", "b", "c", "psi",
                                               "grid_size", "mode", "terminal", "variance_lower")}
    params = pipeline.method_params(cfg, **overrides)
    est = make_policy(method, **params)
    est.fit(samples, _utility(cfg, space))
    res = est.dispatch(rho0, space.p_rated_state, samples)
    tag = args.tag or method
    out = args.out
    io.write_policy_csv(out / f"policy_{tag}.csv", est.policy_)
    io.write_distribution_csv(out / f"rho_{tag}.csv", res.rho)
    if hasattr(est, "value_"):
        io.write_value_csv(out / f"value_{tag}.csv", est.value_)
    if method == "moment":
        io.write_rows_csv(out / f"worst_case_{tag}.csv", est.table_.rows(),
                          ["alpha", "beta", "m", "sigma2", "b", "c", "primal", "dual", "gap"])
    if method == "wasserstein":
        io.write_rows_csv(out / f"wasserstein_{tag}.csv", est.diagnostics_["columns"],
                          ["t", "beta", "lambda_star", "worst_case", "n_candidates", "cuts_used"])
    io.write_text(out / f"dispatch_{tag}.json", res.to_json(rho_path=f"rho_{tag}.csv") + "\n")


def cmd_evaluate(args):
    cfg = _config(args)
    samples, space, rho0 = _load_inputs(args, cfg)
    policy = io.read_policy_csv(args.policy)
    scfg = SolveConfig(args.gamma or cfg.method.gamma, args.terminal or cfg.method.terminal)
    costs = out_of_sample_costs(policy, samples, _utility(cfg, space), scfg, rho0)
    doc = {"policy": str(args.policy), "gamma": scfg.gamma, "n_samples": len(samples),
           "oos_mean": float(costs.mean()), "oos_worst": float(costs.max()),
           "oos_best": float(costs.min())}
    io.write_json(args.out / f"evaluation_{args.policy.stem}.json", doc)


def cmd_report(args):
    cfg = _config(args)
    if args.table is not None:
        sc = pipeline.build_scenario(cfg)
        rows = pipeline.sweep(sc, args.table)
        # wall-clock times live in their own file so the tables stay reproducible
        keys = [k for k in rows[0] if k != "seconds"]
        io.write_rows_csv(args.out / f"table{args.table}_long.csv", rows, keys)
        io.write_rows_csv(args.out / f"timing{args.table}.csv", rows, keys[:-1] + ["seconds"])
        header, body = pipeline.widen(rows, args.table)
        io.write_rows_csv(args.out / f"table{args.table}.csv",
                          [dict(zip(header, r)) for r in body], header)
        return
    results = args.results or args.out
    docs = []
    for path in sorted(Path(results).glob("dispatch_*.json")):
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: {exc}") from None
        doc["tag"] = path.stem[len("dispatch_"):]
        docs.append(doc)
    if not docs:
        raise DataError(f"no dispatch_*.json files in {results}")
    keys = ["tag", "method", "gamma", "eta", "xi", "varsigma", "b", "c", "psi", "objective",
            "oos_mean", "oos_worst"]
    summary = [{k: d.get(k, d["params"].get(k)) for k in keys} for d in docs]
    io.write_rows_csv(args.out / "summary.csv", summary, keys)
    rows = []
    for d in docs:
        refs = [r for r in docs if r["method"] == "standard" and r["gamma"] == d["gamma"]]
        if not refs or d is refs[0]:
            continue
        for t, dp in enumerate(delta_power(np.array(d["power"]), np.array(refs[0]["power"]))):
            rows.append({"tag": d["tag"], "gamma": d["gamma"], "t": t, "delta_p_kw": float(dp)})
    if rows:
        io.write_rows_csv(args.out / "delta_power.csv", rows, ["tag", "gamma", "t", "delta_p_kw"])


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "sample": cmd_sample,
            "solve": cmd_solve, "evaluate": cmd_evaluate, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except Exception as exc:
        for cls, code, kind in EXIT_CODES:
            if isinstance(exc, cls):
                msg = " ".join(str(exc).split())
                print(f"tcldro: {kind}: {msg}", file=sys.stderr)
                return code
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
