"""Command-line entry point: ``budget-ewm {score,solve,critval,simulate}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import sys

from . import io
from .config import SIM_RULES, grid_from_config, load_config
from .critval import CritValRequest, simulate_critical_value
from .errors import BudgetEWMError, ConfigError
from .moments import moment_table
from .rules import (
    TradeoffConfig,
    alpha_schedule,
    mistake_control_rule,
    sample_analog_rule,
    tradeoff_rule,
)
from .scoring import aipw_scores, ipw_scores
from .simlab import RuleSpec, make_dgp, run_monte_carlo

# flag dest -> (section, key)
FLAG_MAP = {
    "input": ("paths", "input"),
    "output": ("paths", "output"),
    "curves": ("paths", "curves"),
    "moments": ("paths", "moments"),
    "moments_out": ("paths", "moments_out"),
    "iterations": ("paths", "iterations"),
    "n_groups": ("grid", "n_groups"),
    "allow_large": ("grid", "allow_large"),
    "mode": ("scoring", "mode"),
    "kappa": ("scoring", "kappa"),
    "propensity": ("scoring", "propensity"),
    "clip": ("scoring", "clip"),
    "rule": ("rules", "rule"),
    "k": ("rules", "k"),
    "alpha": ("rules", "alpha"),
    "alpha_schedule": ("rules", "alpha_schedule"),
    "lambda_bar": ("rules", "lambda_bar"),
    "draws": ("rules", "n_draws"),
    "sigma_floor": ("rules", "sigma_floor"),
    "dgp": ("simulate", "dgp"),
    "n": ("simulate", "n"),
    "iters": ("simulate", "iters"),
    "sim_rules": ("simulate", "rules"),
    "mc_draws": ("simulate", "mc_draws"),
    "eps_w": ("simulate", "eps_w"),
    "workers": ("simulate", "workers"),
}


def _overrides(args, seed_section: str) -> dict:
    out: dict = {}
    for dest, (sec, key) in FLAG_MAP.items():
        val = getattr(args, dest, None)
        if val is not None:
            out.setdefault(sec, {})[key] = val
    if getattr(args, "seed", None) is not None:
        out.setdefault(seed_section, {})["seed"] = args.seed
    return out


def _config(args, seed_section="rules", input_key=None) -> dict:
    overrides = _overrides(args, seed_section)
    cfg = load_config(args.config, overrides)
    if input_key and cfg["paths"][input_key] is None:
        raise ConfigError(f"paths.{input_key}: is required for this command")
    return cfg


def cmd_score(args) -> int:
    cfg = _config(args, input_key="input")
    sc = cfg["scoring"]
    raw = io.read_raw_csv(cfg["paths"]["input"], cfg["grid"]["n_groups"])
    if sc["mode"] == "ipw":
        scores = ipw_scores(raw, sc["propensity"], sc["kappa"])
    else:
        scores = aipw_scores(raw, sc["kappa"], sc["clip"])
    io.write_text(cfg["paths"]["output"], io.scores_csv(scores))
    return 0


def _outcome_dict(out, k) -> dict:
    return {
        "rule": out.rule,
        "thresholds": list(out.policy.thresholds),
        "policy_index": out.policy_index,
        "objective": out.objective,
        "w_hat": out.w_hat,
        "b_hat": out.b_hat,
        "constraint_slack": k - out.b_hat,
        "feasible_set_size": out.feasible_set_size,
        "c_alpha_used": out.c_alpha_used,
        "alpha_used": out.alpha_used,
        "lambda_bar_used": out.lambda_bar_used,
        "fell_back_to_null": out.fell_back_to_null,
    }


def cmd_solve(args) -> int:
    cfg = _config(args, input_key="input")
    rc = cfg["rules"]
    grid = grid_from_config(cfg)
    scores = io.read_scores_csv(cfg["paths"]["input"], cfg["grid"]["n_groups"])
    table = moment_table(scores, grid, allow_large=cfg["grid"]["allow_large"])
    k = 0.0 if rc["k"] is None else float(rc["k"])
    if rc["rule"] == "sample-analog":
        out = sample_analog_rule(table, k)
    elif rc["rule"] == "mistake-control":
        alpha = alpha_schedule(table.n, rc["alpha"]) if rc["alpha_schedule"] else rc["alpha"]
        out = mistake_control_rule(table, k, alpha, n_draws=rc["n_draws"], seed=rc["seed"],
                                   sigma_floor=rc["sigma_floor"])
    else:
        if rc["lambda_bar"] is None:
            raise ConfigError("rules.lambda_bar: is required for the tradeoff rule")
        out = tradeoff_rule(table, TradeoffConfig(float(rc["lambda_bar"]), k))
    if cfg["paths"]["curves"]:
        io.write_text(cfg["paths"]["curves"], io.curves_csv(table))
    if cfg["paths"]["moments_out"]:
        io.write_text(cfg["paths"]["moments_out"], io.dumps_json(io.moment_table_dict(table)))
    report = {"config": cfg, "n": table.n, "grid_size": len(grid), "k": k,
              "outcome": _outcome_dict(out, k)}
    io.write_text(cfg["paths"]["output"], io.dumps_json(report))
    return 0


def cmd_critval(args) -> int:
    cfg = _config(args, input_key="moments")
    rc = cfg["rules"]
    table = io.read_moment_table(cfg["paths"]["moments"])
    res = simulate_critical_value(CritValRequest(table.cov_b, alpha=rc["alpha"], n_draws=rc["n_draws"],
                                                 seed=rc["seed"], sigma_floor=rc["sigma_floor"]))
    report = {"c_alpha": res.c_alpha, "jitter": res.jitter, "n_excluded": res.n_excluded,
              "n_policies": res.n_policies, "n_draws": res.n_draws, "alpha": rc["alpha"],
              "seed": rc["seed"], "sigma_floor": rc["sigma_floor"]}
    io.write_text(cfg["paths"]["output"], io.dumps_json(report))
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args, seed_section="simulate")
    sim, rc = cfg["simulate"], cfg["rules"]
    dgp = make_dgp(sim["dgp"], **cfg["dgp"])
    grid = grid_from_config(cfg) if cfg["grid"]["cutoffs"] is not None else dgp.default_grid()
    specs = [RuleSpec(kind, alpha=rc["alpha"], use_alpha_schedule=rc["alpha_schedule"],
                      lambda_bar=rc["lambda_bar"], n_draws=sim["mc_draws"],
                      sigma_floor=rc["sigma_floor"]) for kind in sim["rules"]]
    report = run_monte_carlo(dgp, grid, specs, n=sim["n"], iters=sim["iters"], master_seed=sim["seed"],
                             k=rc["k"], eps_w=sim["eps_w"], score_mode=cfg["scoring"]["mode"],
                             shortfall_frac=sim["shortfall_frac"], workers=sim["workers"],
                             allow_large=cfg["grid"]["allow_large"])
    if cfg["paths"]["iterations"]:
        io.write_text(cfg["paths"]["iterations"], io.iterations_csv(report.iterations, grid.n_groups))
    io.write_text(cfg["paths"]["output"], io.dumps_json({"config": cfg, "report": report.to_dict()}))
    return 0


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--output", help="output file (default: stdout)")
    p.add_argument("--seed", type=int)


def _rule_flags(p: argparse.ArgumentParser):
    p.add_argument("--k", type=float, help="budget threshold")
    p.add_argument("--alpha", type=float)
    p.add_argument("--alpha-schedule", action="store_const", const=True,
                   help="use min(alpha, 1/log n) instead of a fixed alpha")
    p.add_argument("--lambda-bar", type=float)
    p.add_argument("--draws", type=int, help="critical-value simulation draws")
    p.add_argument("--sigma-floor", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="budget-ewm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="raw experimental CSV -> score CSV")
    _common(p)
    p.add_argument("--input")
    p.add_argument("--mode", choices=["ipw", "aipw"])
    p.add_argument("--kappa", type=float)
    p.add_argument("--propensity", type=float)
    p.add_argument("--clip", type=float)
    p.add_argument("--n-groups", type=int)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("solve", help="score CSV -> selected policy JSON")
    _common(p)
    p.add_argument("--input")
    p.add_argument("--rule", choices=["sample-analog", "mistake-control", "tradeoff"])
    _rule_flags(p)
    p.add_argument("--n-groups", type=int)
    p.add_argument("--allow-large", action="store_const", const=True)
    p.add_argument("--curves", help="per-policy curves CSV")
    p.add_argument("--moments-out", help="moment-table JSON for the critval command")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("critval", help="moment-table JSON -> critical value JSON")
    _common(p)
    p.add_argument("--moments", help="moment-table JSON written by solve --moments-out")
    p.add_argument("--alpha", type=float)
    p.add_argument("--draws", type=int)
    p.add_argument("--sigma-floor", type=float)
    p.set_defaults(func=cmd_critval)

    p = sub.add_parser("simulate", help="Monte Carlo evaluation on a synthetic population")
    _common(p)
    p.add_argument("--dgp", choices=["prop1", "calibrated-mixture", "custom"])
    p.add_argument("--n", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--rules", dest="sim_rules", nargs="+", choices=list(SIM_RULES))
    _rule_flags(p)
    p.add_argument("--mc-draws", type=int, help="critical-value draws per iteration")
    p.add_argument("--eps-w", type=float)
    p.add_argument("--mode", choices=["ipw", "aipw"])
    p.add_argument("--workers", type=int, help="worker processes (default: $BUDGET_EWM_THREADS or 1)")
    p.add_argument("--iterations", help="per-iteration CSV")
    p.add_argument("--allow-large", action="store_const", const=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BudgetEWMError as exc:
        print(f"budget-ewm: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
