"""Synthetic populations with exact welfare/budget oracles and a Monte Carlo harness.

Synthetic records follow the potential-outcome mapping of a randomized
eligibility experiment: ``y = d*Y1 + (1-d)*Y0`` with ``Y0 = 0`` and
``Y1 = Gamma``, and excess cost ``z = d*R``.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import BudgetEWMError, ConfigError, InvalidInputError, IterationError, NumericError
from .moments import moment_table
from .policy import PolicyGrid, ThresholdPolicy, enumerate_grid, uniform_cutoffs
from .rules import (
    TradeoffConfig,
    alpha_schedule,
    mistake_control_rule,
    sample_analog_rule,
    tradeoff_objective,
    tradeoff_rule,
)
from .scoring import RawSample, aipw_scores, ipw_scores

THREADS_ENV = "BUDGET_EWM_THREADS"


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _grid_sum(grid: PolicyGrid, per_group: Sequence[np.ndarray]) -> np.ndarray:
    return sum(vals[grid.index[:, j]] for j, vals in enumerate(per_group))


class Dgp:
    """Base for synthetic populations. Subclasses provide per-group oracles."""

    kind = "abstract"
    n_groups = 1
    propensity = 0.5
    kappa = 0.0
    default_k = 0.0
    default_lambda_bar = 1.0

    def _group_moments(self, j: int, cutoffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def grid_moments(self, grid: PolicyGrid) -> tuple[np.ndarray, np.ndarray]:
        """Population (W, B) for every grid policy."""
        if grid.n_groups != self.n_groups:
            raise InvalidInputError(f"grid has {grid.n_groups} groups, population has {self.n_groups}")
        parts = [self._group_moments(j, np.asarray(c, dtype=float)) for j, c in enumerate(grid.cutoffs)]
        return _grid_sum(grid, [p[0] for p in parts]), _grid_sum(grid, [p[1] for p in parts])

    def population_moments(self, policy: ThresholdPolicy) -> tuple[float, float]:
        grid = enumerate_grid([[t] for t in policy.thresholds])
        w, b = self.grid_moments(grid)
        return float(w[0]), float(b[0])

    def default_grid(self) -> PolicyGrid:
        raise NotImplementedError

    def draw_sample(self, n: int, seed) -> RawSample:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Prop1Dgp(Dgp):
    """One covariate X ~ U(0, 1), benefit identically 1, binary take-up cost.

    Take-up (cost 1) happens with probability ``q`` outside
    ``[t_low, t_high]`` and never inside it, so the budget function is flat
    on that interval and binds there when ``k = q * t_low``.
    """

    t_low: float = 0.4
    t_high: float = 0.6
    q: float = 0.5
    propensity: float = 0.5
    grid_step: float = 0.0005
    lambda_bar: float = 4.0

    kind = "prop1"
    n_groups = 1
    kappa = 0.0

    def __post_init__(self):
        if not 0 < self.t_low < self.t_high < 1:
            raise ConfigError("prop1 needs 0 < t_low < t_high < 1")
        if not 0 < self.q < 1:
            raise ConfigError("prop1 needs q in (0, 1)")
        if not 0 < self.propensity < 1:
            raise ConfigError("propensity must lie in (0, 1)")

    @property
    def default_k(self) -> float:
        return self.q * self.t_low

    @property
    def default_lambda_bar(self) -> float:
        return self.lambda_bar

    def _group_moments(self, j, cutoffs):
        t = np.minimum(cutoffs, 1.0)
        w = np.where(cutoffs > 0, t, 0.0)
        b = self.q * np.minimum(t, self.t_low) + self.q * np.maximum(t - self.t_high, 0.0)
        return w, np.where(cutoffs > 0, b, 0.0)

    def default_grid(self) -> PolicyGrid:
        return enumerate_grid([uniform_cutoffs(1.0, self.grid_step)])

    def draw_sample(self, n: int, seed) -> RawSample:
        if n < 1:
            raise InvalidInputError("n must be at least 1")
        rng = _rng(seed)
        x = rng.uniform(0.0, 1.0, n)
        d = (rng.uniform(size=n) < self.propensity).astype(np.int64)
        outside = (x < self.t_low) | (x > self.t_high)
        takeup = outside & (rng.uniform(size=n) < self.q)
        m = d * takeup.astype(np.int64)
        return RawSample(y=d.astype(float), c=m.astype(float), m=m, d=d, income=x,
                         group=np.zeros(n, dtype=np.int64))

    def describe(self) -> dict:
        return {"kind": self.kind, "t_low": self.t_low, "t_high": self.t_high, "q": self.q,
                "propensity": self.propensity, "grid_step": self.grid_step,
                "lambda_bar": self.lambda_bar}


@dataclass(frozen=True)
class CalibratedMixtureDgp(Dgp):
    """Three child-count groups with group-level benefit/cost means.

    Income is uniform on ``[0, income_max]`` within every group; benefits and
    costs are normal around the group means and independent of income.
    """

    weights: tuple[float, ...] = (0.568, 0.171, 0.261)
    benefit_means: tuple[float, ...] = (0.031, 0.103, 0.015)
    cost_means: tuple[float, ...] = (651.0, 348.0, -275.0)
    benefit_sd: float = 0.5
    cost_sd: float = 2000.0
    income_max: float = 500.0
    propensity: float = 0.5
    kappa: float = 6000.0
    cutoff_step: float = 50.0
    lambda_bar: float = 1.0 / 0.6e5

    kind = "calibrated_mixture"

    def __post_init__(self):
        for name in ("weights", "benefit_means", "cost_means"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not len(self.weights) == len(self.benefit_means) == len(self.cost_means):
            raise ConfigError("weights and group means must have equal length")
        if abs(sum(self.weights) - 1.0) > 1e-9 or min(self.weights) < 0:
            raise ConfigError("group weights must be nonnegative and sum to 1")
        if not 0 < self.propensity < 1:
            raise ConfigError("propensity must lie in (0, 1)")
        if self.income_max <= 0 or self.benefit_sd < 0 or self.cost_sd < 0:
            raise ConfigError("income_max must be positive and sds nonnegative")

    @property
    def n_groups(self) -> int:
        return len(self.weights)

    @property
    def default_k(self) -> float:
        return 0.0

    @property
    def default_lambda_bar(self) -> float:
        return self.lambda_bar

    def _group_moments(self, j, cutoffs):
        share = np.where(cutoffs > 0, np.minimum(cutoffs, self.income_max) / self.income_max, 0.0)
        mass = self.weights[j] * share
        return mass * self.benefit_means[j], mass * self.cost_means[j]

    def default_grid(self) -> PolicyGrid:
        cuts = uniform_cutoffs(self.income_max, self.cutoff_step)
        return enumerate_grid([cuts] * self.n_groups)

    def draw_sample(self, n: int, seed) -> RawSample:
        if n < 1:
            raise InvalidInputError("n must be at least 1")
        rng = _rng(seed)
        group = rng.choice(self.n_groups, size=n, p=np.asarray(self.weights))
        income = rng.uniform(0.0, self.income_max, n)
        gamma = rng.normal(np.asarray(self.benefit_means)[group], self.benefit_sd)
        cost = rng.normal(np.asarray(self.cost_means)[group], self.cost_sd)
        d = (rng.uniform(size=n) < self.propensity).astype(np.int64)
        return RawSample(y=d * gamma, c=d * (cost + self.kappa), m=d.copy(), d=d,
                         income=income, group=group)

    def describe(self) -> dict:
        return {"kind": self.kind, "weights": list(self.weights),
                "benefit_means": list(self.benefit_means), "cost_means": list(self.cost_means),
                "benefit_sd": self.benefit_sd, "cost_sd": self.cost_sd,
                "income_max": self.income_max, "propensity": self.propensity,
                "kappa": self.kappa, "cutoff_step": self.cutoff_step,
                "lambda_bar": self.lambda_bar}


@dataclass(frozen=True)
class CustomTableDgp(Dgp):
    """Discrete population: a table of (income, group, prob, benefit_mean, cost_mean) support points."""

    cells: tuple[tuple[float, int, float, float, float], ...]
    benefit_sd: float = 0.5
    cost_sd: float = 1.0
    propensity: float = 0.5
    kappa: float = 0.0
    k: float = 0.0
    lambda_bar: float = 1.0
    cutoffs: tuple[tuple[float, ...], ...] | None = None

    kind = "custom_table"

    def __post_init__(self):
        cells = tuple((float(a), int(g), float(p), float(bm), float(cm)) for a, g, p, bm, cm in self.cells)
        if not cells:
            raise ConfigError("custom table needs at least one cell")
        probs = np.array([c[2] for c in cells])
        if probs.min() < 0 or abs(probs.sum() - 1.0) > 1e-9:
            raise ConfigError("cell probabilities must be nonnegative and sum to 1")
        if min(c[0] for c in cells) < 0 or min(c[1] for c in cells) < 0:
            raise ConfigError("cell incomes and groups must be nonnegative")
        if not 0 < self.propensity < 1:
            raise ConfigError("propensity must lie in (0, 1)")
        object.__setattr__(self, "cells", cells)
        if self.cutoffs is not None:
            object.__setattr__(self, "cutoffs", tuple(tuple(float(v) for v in c) for c in self.cutoffs))

    @property
    def n_groups(self) -> int:
        return max(c[1] for c in self.cells) + 1

    @property
    def default_k(self) -> float:
        return self.k

    @property
    def default_lambda_bar(self) -> float:
        return self.lambda_bar

    def _group_moments(self, j, cutoffs):
        w = np.zeros(len(cutoffs))
        b = np.zeros(len(cutoffs))
        for income, g, p, bm, cm in self.cells:
            if g == j:
                hit = (income <= cutoffs) & (cutoffs > 0)
                w += hit * (p * bm)
                b += hit * (p * cm)
        return w, b

    def default_grid(self) -> PolicyGrid:
        if self.cutoffs is not None:
            return enumerate_grid(self.cutoffs)
        per_group = []
        for j in range(self.n_groups):
            incomes = sorted({c[0] for c in self.cells if c[1] == j and c[0] > 0})
            per_group.append([0.0] + incomes)
        return enumerate_grid(per_group)

    def draw_sample(self, n: int, seed) -> RawSample:
        if n < 1:
            raise InvalidInputError("n must be at least 1")
        rng = _rng(seed)
        table = np.array(self.cells, dtype=float)
        pick = rng.choice(len(self.cells), size=n, p=table[:, 2])
        gamma = rng.normal(table[pick, 3], self.benefit_sd)
        cost = rng.normal(table[pick, 4], self.cost_sd)
        d = (rng.uniform(size=n) < self.propensity).astype(np.int64)
        return RawSample(y=d * gamma, c=d * (cost + self.kappa), m=d.copy(), d=d,
                         income=table[pick, 0], group=table[pick, 1].astype(np.int64))

    def describe(self) -> dict:
        return {"kind": self.kind, "cells": [list(c) for c in self.cells],
                "benefit_sd": self.benefit_sd, "cost_sd": self.cost_sd,
                "propensity": self.propensity, "kappa": self.kappa, "k": self.k,
                "lambda_bar": self.lambda_bar,
                "cutoffs": None if self.cutoffs is None else [list(c) for c in self.cutoffs]}


def make_dgp(kind: str, **params) -> Dgp:
    kind = kind.replace("-", "_")
    classes = {"prop1": Prop1Dgp, "calibrated_mixture": CalibratedMixtureDgp, "custom": CustomTableDgp,
               "custom_table": CustomTableDgp}
    if kind not in classes:
        raise ConfigError(f"unknown population kind {kind!r}")
    try:
        return classes[kind](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind}: {exc}") from None


def population_moments(dgp: Dgp, policy: ThresholdPolicy) -> tuple[float, float]:
    return dgp.population_moments(policy)


def draw_sample(dgp: Dgp, n: int, seed) -> RawSample:
    return dgp.draw_sample(n, seed)


@dataclass(frozen=True)
class PopulationOptimum:
    policy: ThresholdPolicy
    index: int | None
    welfare: float
    budget: float
    objective: float


def _null_optimum(grid: PolicyGrid) -> PopulationOptimum:
    return PopulationOptimum(ThresholdPolicy((0.0,) * grid.n_groups), None, 0.0, 0.0, 0.0)


def constrained_optimum(dgp: Dgp, grid: PolicyGrid, k: float) -> PopulationOptimum:
    """Brute-force argmax of W over grid policies with B <= k (null policy if none)."""
    w, b = dgp.grid_moments(grid)
    feasible = b <= k
    if not feasible.any():
        return _null_optimum(grid)
    idx = int(np.argmax(np.where(feasible, w, -np.inf)))
    return PopulationOptimum(grid[idx], idx, float(w[idx]), float(b[idx]), float(w[idx]))


def tradeoff_optimum(dgp: Dgp, grid: PolicyGrid, k: float, lambda_bar: float) -> PopulationOptimum:
    """Brute-force argmax of W - lambda_bar * (B - k)_+ over the grid.

    Raises NumericError if its welfare falls below the constrained optimum's,
    which the penalized problem can never do when that optimum is on the grid.
    """
    w, b = dgp.grid_moments(grid)
    obj = tradeoff_objective(w, b, k, lambda_bar)
    idx = int(np.argmax(obj))
    result = PopulationOptimum(grid[idx], idx, float(w[idx]), float(b[idx]), float(obj[idx]))
    best = constrained_optimum(dgp, grid, k)
    if best.index is not None and result.welfare < best.welfare - 1e-12 * max(1.0, abs(best.welfare)):
        raise NumericError("trade-off optimum has lower welfare than the constrained optimum")
    return result


@dataclass(frozen=True)
class RuleSpec:
    """One rule to evaluate in a Monte Carlo run.

    ``kind`` is sample-analog, mistake-control, tradeoff, or oracle (always
    returns the population constrained optimum).
    """

    kind: str
    alpha: float = 0.05
    use_alpha_schedule: bool = False
    lambda_bar: float | None = None
    n_draws: int = 2000
    sigma_floor: float | None = None
    label: str | None = None

    def __post_init__(self):
        if self.kind not in ("sample-analog", "mistake-control", "tradeoff", "oracle"):
            raise ConfigError(f"unknown rule {self.kind!r}")

    @property
    def name(self) -> str:
        return self.label or self.kind


@dataclass(frozen=True)
class IterationRow:
    iteration: int
    rule: str
    thresholds: tuple[float, ...]
    welfare: float
    budget: float
    feasible: bool
    fell_back_to_null: bool
    c_alpha: float | None


@dataclass(frozen=True)
class RuleMetrics:
    prob_infeasible: float
    prob_weak_violation: float
    prob_suboptimal: float
    prob_large_shortfall: float
    avg_welfare_loss: float
    loss_is_relative: bool
    avg_cost: float
    prob_null: float
    mean_c_alpha: float | None


@dataclass(frozen=True)
class MonteCarloReport:
    dgp: dict
    n: int
    iters: int
    seed: int
    k: float
    eps_w: float
    shortfall_frac: float
    score_mode: str
    grid_size: int
    optimum_thresholds: tuple[float, ...]
    optimum_welfare: float
    optimum_budget: float
    rules: dict[str, RuleMetrics]
    rule_specs: list[dict]
    iterations: list[IterationRow] = field(repr=False)

    def to_dict(self) -> dict:
        out = {
            "dgp": self.dgp,
            "n": self.n,
            "iters": self.iters,
            "seed": self.seed,
            "k": self.k,
            "eps_w": self.eps_w,
            "shortfall_frac": self.shortfall_frac,
            "score_mode": self.score_mode,
            "grid_size": self.grid_size,
            "optimum": {"thresholds": list(self.optimum_thresholds),
                        "welfare": self.optimum_welfare, "budget": self.optimum_budget},
            "rule_specs": self.rule_specs,
            "rules": {name: asdict(m) for name, m in self.rules.items()},
        }
        return out


def iteration_seeds(master_seed: int, iteration: int) -> tuple[int, int]:
    """(sampling seed, critical-value seed) derived from the master seed and iteration index."""
    state = np.random.SeedSequence([int(master_seed), int(iteration)]).generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


@dataclass(frozen=True, eq=False)
class _Job:
    dgp: Dgp
    grid: PolicyGrid
    rules: tuple[RuleSpec, ...]
    n: int
    k: float
    master_seed: int
    score_mode: str
    pop_w: np.ndarray
    pop_b: np.ndarray
    optimum: PopulationOptimum
    allow_large: bool


def _score(job: _Job, raw: RawSample):
    if job.score_mode == "ipw":
        return ipw_scores(raw, job.dgp.propensity, job.dgp.kappa)
    if job.score_mode == "aipw":
        return aipw_scores(raw, job.dgp.kappa)
    raise ConfigError(f"unknown score mode {job.score_mode!r}")


def _run_iteration(job: _Job, i: int) -> list[IterationRow]:
    sample_seed, crit_seed = iteration_seeds(job.master_seed, i)
    try:
        raw = job.dgp.draw_sample(job.n, sample_seed)
        table = moment_table(_score(job, raw), job.grid, allow_large=job.allow_large)
        rows = []
        for spec in job.rules:
            if spec.kind == "oracle":
                idx, null, c_alpha = job.optimum.index, job.optimum.index is None, None
            else:
                if spec.kind == "sample-analog":
                    out = sample_analog_rule(table, job.k)
                elif spec.kind == "mistake-control":
                    alpha = alpha_schedule(job.n, spec.alpha) if spec.use_alpha_schedule else spec.alpha
                    out = mistake_control_rule(table, job.k, alpha, n_draws=spec.n_draws,
                                               seed=crit_seed, sigma_floor=spec.sigma_floor)
                else:
                    lam = job.dgp.default_lambda_bar if spec.lambda_bar is None else spec.lambda_bar
                    out = tradeoff_rule(table, TradeoffConfig(lam, job.k))
                idx, null, c_alpha = out.policy_index, out.fell_back_to_null, out.c_alpha_used
            if idx is None:
                thresholds, wv, bv = (0.0,) * job.grid.n_groups, 0.0, 0.0
            else:
                thresholds = tuple(float(t) for t in job.grid.thresholds[idx])
                wv, bv = float(job.pop_w[idx]), float(job.pop_b[idx])
            rows.append(IterationRow(i, spec.name, thresholds, wv, bv, bv <= job.k, null, c_alpha))
        return rows
    except BudgetEWMError as exc:
        raise IterationError(i, sample_seed, exc) from exc


def _run_chunk(job: _Job, indices: Sequence[int]) -> list[list[IterationRow]]:
    return [_run_iteration(job, i) for i in indices]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from None


def _metrics(rows: list[IterationRow], k: float, w_star: float, eps_w: float,
             shortfall_frac: float) -> RuleMetrics:
    w = np.array([r.welfare for r in rows])
    b = np.array([r.budget for r in rows])
    relative = w_star > 0
    loss = (w_star - w) / w_star if relative else (w_star - w)
    cs = [r.c_alpha for r in rows if r.c_alpha is not None]
    return RuleMetrics(
        prob_infeasible=float(np.mean(b > k)),
        prob_weak_violation=float(np.mean(b >= k)),
        prob_suboptimal=float(np.mean(w < w_star - eps_w)),
        prob_large_shortfall=float(np.mean(w < w_star - shortfall_frac * abs(w_star))),
        avg_welfare_loss=float(np.mean(loss)),
        loss_is_relative=bool(relative),
        avg_cost=float(np.mean(b)),
        prob_null=float(np.mean([r.fell_back_to_null for r in rows])),
        mean_c_alpha=float(np.mean(cs)) if cs else None,
    )


def run_monte_carlo(dgp: Dgp, grid: PolicyGrid | None, rules: Sequence[RuleSpec], n: int, iters: int,
                    master_seed: int = 0, k: float | None = None, eps_w: float | None = None,
                    score_mode: str = "ipw", shortfall_frac: float = 0.1,
                    workers: int | None = None, allow_large: bool = False) -> MonteCarloReport:
    """Repeatedly sample, score, select with every rule, and grade the picks against the population."""
    if iters < 1:
        raise InvalidInputError("iters must be at least 1")
    if not rules:
        raise ConfigError("need at least one rule")
    names = [r.name for r in rules]
    if len(set(names)) != len(names):
        raise ConfigError("rule labels must be unique")
    grid = dgp.default_grid() if grid is None else grid
    k = dgp.default_k if k is None else float(k)
    pop_w, pop_b = dgp.grid_moments(grid)
    optimum = constrained_optimum(dgp, grid, k)
    eps_w = 1e-9 * abs(optimum.welfare) if eps_w is None else float(eps_w)
    job = _Job(dgp, grid, tuple(rules), int(n), k, int(master_seed), score_mode,
               pop_w, pop_b, optimum, allow_large)

    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        per_iter = [_run_iteration(job, i) for i in range(iters)]
    else:
        chunks = [list(range(iters))[w::workers] for w in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, [job] * workers, chunks))
        by_index = {}
        for chunk, res in zip(chunks, results):
            by_index.update(zip(chunk, res))
        per_iter = [by_index[i] for i in range(iters)]

    all_rows = [row for rows in per_iter for row in rows]
    metrics = {
        name: _metrics([r for r in all_rows if r.rule == name], k, optimum.welfare, eps_w, shortfall_frac)
        for name in names
    }
    return MonteCarloReport(
        dgp=dgp.describe(), n=int(n), iters=int(iters), seed=int(master_seed), k=k, eps_w=eps_w,
        shortfall_frac=shortfall_frac, score_mode=score_mode, grid_size=len(grid),
        optimum_thresholds=optimum.policy.thresholds, optimum_welfare=optimum.welfare,
        optimum_budget=optimum.budget, rules=metrics,
        rule_specs=[asdict(r) for r in rules], iterations=all_rows,
    )
