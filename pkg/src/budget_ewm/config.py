"""Run configuration: a TOML file with one table per pipeline stage.

Example::

    [grid]
    n_groups = 3
    cutoffs = [[0, 50, 100], [0, 50, 100], [0, 50, 100]]

    [scoring]
    mode = "ipw"
    propensity = 0.5

    [rules]
    rule = "mistake-control"
    alpha = 0.05

Unknown sections or keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

import copy
import math
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .policy import DEFAULT_CUTOFFS, PolicyGrid, enumerate_grid

RULES = ("sample-analog", "mistake-control", "tradeoff")
SIM_RULES = RULES + ("oracle",)

DEFAULTS: dict[str, dict[str, Any]] = {
    "grid": {"n_groups": 3, "cutoffs": None, "allow_large": False},
    "scoring": {"mode": "ipw", "kappa": 6000.0, "propensity": 0.5, "clip": 0.01},
    "rules": {"rule": "sample-analog", "k": None, "alpha": 0.05, "alpha_schedule": False,
              "lambda_bar": None, "n_draws": 10_000, "seed": 0, "sigma_floor": None},
    "simulate": {"dgp": "prop1", "n": 4000, "iters": 500, "seed": 0,
                 "rules": list(SIM_RULES[:3]), "mc_draws": 2000, "eps_w": None,
                 "shortfall_frac": 0.1, "workers": None},
    "dgp": {},
    "paths": {"input": None, "output": None, "curves": None, "moments": None, "moments_out": None,
              "iterations": None},
}

INPUT_PATHS = ("input", "moments")


def _fail(key: str, msg: str):
    raise ConfigError(f"{key}: {msg}")


def _num(cfg, sec, key, lo=-math.inf, hi=math.inf, lo_open=False, hi_open=False, optional=False):
    v = cfg[sec][key]
    name = f"{sec}.{key}"
    if v is None:
        if optional:
            return
        _fail(name, "is required")
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(name, f"must be a finite number, got {v!r}")
    if v < lo or v > hi or (lo_open and v == lo) or (hi_open and v == hi):
        lb = "(" if lo_open else "["
        rb = ")" if hi_open else "]"
        _fail(name, f"must lie in {lb}{lo}, {hi}{rb}, got {v!r}")


def _int(cfg, sec, key, lo, optional=False):
    v = cfg[sec][key]
    if v is None and optional:
        return
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        _fail(f"{sec}.{key}", f"must be an integer >= {lo}, got {v!r}")


def _bool(cfg, sec, key):
    if not isinstance(cfg[sec][key], bool):
        _fail(f"{sec}.{key}", "must be true or false")


def _choice(cfg, sec, key, options):
    if cfg[sec][key] not in options:
        _fail(f"{sec}.{key}", f"must be one of {list(options)}, got {cfg[sec][key]!r}")


def validate(cfg: dict) -> dict:
    _int(cfg, "grid", "n_groups", 1)
    _bool(cfg, "grid", "allow_large")
    cuts = cfg["grid"]["cutoffs"]
    if cuts is not None:
        if not isinstance(cuts, list) or len(cuts) != cfg["grid"]["n_groups"]:
            _fail("grid.cutoffs", f"must be a list of {cfg['grid']['n_groups']} cutoff lists")
        try:
            enumerate_grid(cuts)
        except (ConfigError, TypeError, ValueError) as exc:
            _fail("grid.cutoffs", str(exc))

    _choice(cfg, "scoring", "mode", ("ipw", "aipw"))
    _num(cfg, "scoring", "kappa", lo=0)
    _num(cfg, "scoring", "clip", lo=0, hi=0.5, hi_open=True)
    p = cfg["scoring"]["propensity"]
    if isinstance(p, Mapping):
        for cell, val in p.items():
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not 0 < val < 1:
                _fail(f"scoring.propensity.{cell}", f"must lie in (0, 1), got {val!r}")
    else:
        _num(cfg, "scoring", "propensity", lo=0, hi=1, lo_open=True, hi_open=True)

    _choice(cfg, "rules", "rule", RULES)
    _num(cfg, "rules", "k", optional=True)
    _num(cfg, "rules", "alpha", lo=0, hi=0.5, lo_open=True)
    _bool(cfg, "rules", "alpha_schedule")
    _num(cfg, "rules", "lambda_bar", lo=0, optional=True)
    _int(cfg, "rules", "n_draws", 1)
    _int(cfg, "rules", "seed", 0)
    _num(cfg, "rules", "sigma_floor", lo=0, optional=True)

    _choice(cfg, "simulate", "dgp", ("prop1", "calibrated-mixture", "calibrated_mixture", "custom"))
    _int(cfg, "simulate", "n", 1)
    _int(cfg, "simulate", "iters", 1)
    _int(cfg, "simulate", "seed", 0)
    _int(cfg, "simulate", "mc_draws", 1)
    _int(cfg, "simulate", "workers", 1, optional=True)
    _num(cfg, "simulate", "eps_w", lo=0, optional=True)
    _num(cfg, "simulate", "shortfall_frac", lo=0, hi=1)
    rules = cfg["simulate"]["rules"]
    if not isinstance(rules, list) or not rules or any(r not in SIM_RULES for r in rules):
        _fail("simulate.rules", f"must be a non-empty list drawn from {list(SIM_RULES)}")
    if len(set(rules)) != len(rules):
        _fail("simulate.rules", "must not repeat a rule")

    for key in INPUT_PATHS:
        path = cfg["paths"][key]
        if path is not None and not Path(path).is_file():
            _fail(f"paths.{key}", f"file not found: {path}")
    return cfg


def merge(base: dict, overrides: Mapping[str, Mapping[str, Any]]) -> dict:
    out = copy.deepcopy(base)
    for sec, values in overrides.items():
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown config section [{sec}]")
        if not isinstance(values, Mapping):
            raise ConfigError(f"[{sec}] must be a table")
        for key, val in values.items():
            if sec != "dgp" and key not in DEFAULTS[sec]:
                raise ConfigError(f"{sec}.{key}: unknown key")
            out[sec][key] = copy.deepcopy(val)
    return out


def load_config(path=None, overrides: Mapping[str, Mapping[str, Any]] | None = None) -> dict:
    """Defaults, then the TOML file (if any), then ``overrides``; validated."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "rb") as handle:
                data = tomllib.load(handle)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = merge(cfg, data)
    if overrides:
        cfg = merge(cfg, overrides)
    return validate(cfg)


def grid_from_config(cfg: dict) -> PolicyGrid:
    cuts = cfg["grid"]["cutoffs"]
    if cuts is None:
        cuts = [list(DEFAULT_CUTOFFS)] * cfg["grid"]["n_groups"]
    return enumerate_grid(cuts)
