"""Sample welfare and budget over a policy grid, plus the budget covariance.

For threshold policies, a unit in group ``j`` is assigned by both ``g`` and
``g'`` exactly when it is assigned by the policy with the smaller group-``j``
cutoff. Every grid quantity therefore reduces to per-group cumulative sums
evaluated at the cutoffs; no pass over (records x policies) is needed.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .errors import ConfigError, EmptyGridError, InvalidInputError
from .policy import PolicyGrid, ThresholdPolicy
from .scoring import ScoredSample, as_scored

MAX_DENSE_POLICIES = 5000


def _check_nonempty(scores: ScoredSample):
    if len(scores) == 0:
        raise InvalidInputError("need at least one scored record")


def welfare_hat(scores, policy: ThresholdPolicy) -> float:
    s = as_scored(scores)
    _check_nonempty(s)
    return float(np.mean(s.gamma_star * policy.assign_many(s.income, s.group)))


def budget_hat(scores, policy: ThresholdPolicy) -> float:
    s = as_scored(scores)
    _check_nonempty(s)
    return float(np.mean(s.r_star * policy.assign_many(s.income, s.group)))


def _cutoff_sums(income, values, cutoffs) -> np.ndarray:
    """For each cutoff c, sum of ``values`` over units with income <= c (0 when c == 0)."""
    order = np.argsort(income, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(values[order])])
    cuts = np.asarray(cutoffs, dtype=float)
    counts = np.searchsorted(income[order], cuts, side="right")
    return np.where(cuts > 0, cum[counts], 0.0)


class MomentTable:
    """Per-policy ``w_hat``, ``b_hat``, ``sigma_b`` aligned with ``grid`` order.

    ``cov_b`` is the plug-in covariance of ``r_star * g`` across policies,
    built on first access.
    """

    def __init__(self, grid: PolicyGrid, n: int, w_hat, b_hat, second_moments=None, cov_b=None):
        self.grid = grid
        self.n = int(n)
        self.w_hat = np.asarray(w_hat, dtype=float)
        self.b_hat = np.asarray(b_hat, dtype=float)
        if len(self.w_hat) != len(grid) or len(self.b_hat) != len(grid):
            raise InvalidInputError("moment rows do not match the grid")
        if second_moments is None and cov_b is None:
            raise InvalidInputError("need per-group second moments or an explicit covariance")
        self._second = second_moments
        if cov_b is not None:
            cov_b = np.asarray(cov_b, dtype=float)
            if cov_b.shape != (len(grid), len(grid)):
                raise InvalidInputError("cov_b shape does not match the grid")
            self.__dict__["cov_b"] = cov_b

    def __len__(self) -> int:
        return len(self.grid)

    @cached_property
    def sigma_b(self) -> np.ndarray:
        if self._second is None:
            var = np.diag(self.cov_b).copy()
        else:
            var = sum(q[self.grid.index[:, j]] for j, q in enumerate(self._second)) - self.b_hat ** 2
        return np.sqrt(np.maximum(var, 0.0))

    @cached_property
    def cov_b(self) -> np.ndarray:
        idx = self.grid.index
        second = np.zeros((len(self), len(self)))
        for j, q in enumerate(self._second):
            second += q[np.minimum.outer(idx[:, j], idx[:, j])]
        cov = second - np.outer(self.b_hat, self.b_hat)
        return (cov + cov.T) / 2.0


def moment_table(scores, grid: PolicyGrid, allow_large: bool = False) -> MomentTable:
    s = as_scored(scores)
    _check_nonempty(s)
    if len(grid) == 0:
        raise EmptyGridError("grid has no policies")
    if len(grid) > MAX_DENSE_POLICIES and not allow_large:
        raise ConfigError(
            f"grid has {len(grid)} policies (> {MAX_DENSE_POLICIES}); pass allow_large=True to proceed"
        )
    if s.group.min() < 0 or s.group.max() >= grid.n_groups:
        raise InvalidInputError(f"record group outside [0, {grid.n_groups})")

    n = len(s)
    w = np.zeros(len(grid))
    b = np.zeros(len(grid))
    second = []
    for j, cuts in enumerate(grid.cutoffs):
        mask = s.group == j
        inc = s.income[mask]
        wj = _cutoff_sums(inc, s.gamma_star[mask], cuts) / n
        bj = _cutoff_sums(inc, s.r_star[mask], cuts) / n
        second.append(_cutoff_sums(inc, s.r_star[mask] ** 2, cuts) / n)
        w += wj[grid.index[:, j]]
        b += bj[grid.index[:, j]]
    return MomentTable(grid, n, w, b, second_moments=second)
