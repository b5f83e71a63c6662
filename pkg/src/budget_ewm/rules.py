"""Policy-selection rules operating on a MomentTable.

All three rules search the finite grid and break ties toward the
lexicographically smallest threshold vector, which is the first maximizer in
grid order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .critval import CritValRequest, normalizable, simulate_critical_value
from .errors import EmptyGridError, InvalidInputError
from .moments import MomentTable
from .policy import ThresholdPolicy, null_policy


@dataclass(frozen=True)
class RuleOutcome:
    rule: str
    policy: ThresholdPolicy
    policy_index: int | None
    objective: float
    w_hat: float
    b_hat: float
    feasible_set_size: int
    c_alpha_used: float | None = None
    lambda_bar_used: float | None = None
    fell_back_to_null: bool = False
    alpha_used: float | None = None


@dataclass(frozen=True)
class TradeoffConfig:
    lambda_bar: float
    k: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.lambda_bar) and self.lambda_bar >= 0):
            raise InvalidInputError("lambda_bar must be finite and nonnegative")


def _argmax_first(objective: np.ndarray, admitted: np.ndarray) -> int | None:
    if not admitted.any():
        return None
    masked = np.where(admitted, objective, -np.inf)
    return int(np.argmax(masked))


def _outcome(rule, table: MomentTable, idx, objective, admitted, **extra) -> RuleOutcome:
    if idx is None:
        return RuleOutcome(rule=rule, policy=null_policy(table.grid.n_groups), policy_index=None,
                           objective=0.0, w_hat=0.0, b_hat=0.0, feasible_set_size=0,
                           fell_back_to_null=True, **extra)
    return RuleOutcome(rule=rule, policy=table.grid[idx], policy_index=idx,
                       objective=float(objective[idx]), w_hat=float(table.w_hat[idx]),
                       b_hat=float(table.b_hat[idx]), feasible_set_size=int(admitted.sum()), **extra)


def _check_table(table: MomentTable):
    if len(table) == 0:
        raise EmptyGridError("moment table is empty")


def sample_analog_rule(table: MomentTable, k: float = 0.0) -> RuleOutcome:
    """Maximize w_hat subject to b_hat <= k; null policy if nothing qualifies."""
    _check_table(table)
    admitted = table.b_hat <= k
    idx = _argmax_first(table.w_hat, admitted)
    return _outcome("sample-analog", table, idx, table.w_hat, admitted)


def mistake_control_admitted(table: MomentTable, k: float, c_alpha: float,
                             sigma_floor: float | None = None) -> np.ndarray:
    """Policies passing the tightened budget test.

    Policies too degenerate to normalize fall back to the raw check b_hat <= k.
    """
    sigma = table.sigma_b
    ok = normalizable(sigma, sigma_floor)
    stat = np.full(len(table), np.inf)
    stat[ok] = math.sqrt(table.n) * (table.b_hat[ok] - k) / sigma[ok]
    return np.where(ok, stat <= c_alpha, table.b_hat <= k)


def mistake_control_rule(table: MomentTable, k: float = 0.0, alpha: float = 0.05,
                         n_draws: int = 10_000, seed: int = 0,
                         sigma_floor: float | None = None,
                         c_alpha: float | None = None) -> RuleOutcome:
    """Maximize w_hat over the policies whose budget passes the one-sided test.

    ``c_alpha`` may be supplied to skip the simulation.
    """
    _check_table(table)
    if c_alpha is None:
        req = CritValRequest(table.cov_b, alpha=alpha, n_draws=n_draws, seed=seed,
                             sigma_floor=sigma_floor)
        c_alpha = simulate_critical_value(req).c_alpha
    admitted = mistake_control_admitted(table, k, c_alpha, sigma_floor)
    idx = _argmax_first(table.w_hat, admitted)
    return _outcome("mistake-control", table, idx, table.w_hat, admitted,
                    c_alpha_used=float(c_alpha), alpha_used=float(alpha))


def tradeoff_objective(w, b, k: float, lambda_bar: float):
    return w - lambda_bar * np.maximum(np.asarray(b) - k, 0.0)


def tradeoff_rule(table: MomentTable, cfg: TradeoffConfig) -> RuleOutcome:
    _check_table(table)
    obj = tradeoff_objective(table.w_hat, table.b_hat, cfg.k, cfg.lambda_bar)
    admitted = np.ones(len(table), dtype=bool)
    idx = _argmax_first(obj, admitted)
    return _outcome("tradeoff", table, idx, obj, admitted, lambda_bar_used=float(cfg.lambda_bar))


def alpha_schedule(n: int, base_alpha: float = 0.05) -> float:
    """Vanishing test level min(base, 1/log n); its normal quantile grows like sqrt(2 log log n)."""
    if n < 1:
        raise InvalidInputError("sample size must be at least 1")
    return min(base_alpha, 1.0 / math.log(max(n, 3)))
