"""Group-wise income-threshold eligibility policies and their grids."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, InvalidInputError

DEFAULT_CUTOFFS: tuple[float, ...] = tuple(float(c) for c in range(0, 501, 50))


@dataclass(frozen=True)
class Covariates:
    income: float
    group: int

    def __post_init__(self):
        if not (self.income >= 0 and math.isfinite(self.income)):
            raise InvalidInputError(f"income must be finite and nonnegative, got {self.income}")
        if int(self.group) != self.group or self.group < 0:
            raise InvalidInputError(f"group must be a nonnegative integer, got {self.group}")


@dataclass(frozen=True)
class ThresholdPolicy:
    """One income cutoff per group; a unit is eligible iff income <= its group's cutoff.

    A cutoff of exactly 0 makes nobody in the group eligible, including
    units reporting zero income.
    """

    thresholds: tuple[float, ...]

    def __post_init__(self):
        ts = tuple(float(t) for t in self.thresholds)
        if not ts:
            raise InvalidInputError("a policy needs at least one group threshold")
        for t in ts:
            if not math.isfinite(t) or t < 0:
                raise InvalidInputError(f"thresholds must be finite and >= 0, got {t}")
        object.__setattr__(self, "thresholds", ts)

    @property
    def n_groups(self) -> int:
        return len(self.thresholds)

    def __call__(self, x: Covariates) -> int:
        return assign(self, x)

    def assign_many(self, income: np.ndarray, group: np.ndarray) -> np.ndarray:
        """Vectorised assignment; returns a float array of 0/1."""
        income = np.asarray(income, dtype=float)
        group = np.asarray(group, dtype=np.int64)
        if group.size and (group.min() < 0 or group.max() >= self.n_groups):
            raise InvalidInputError(f"group index outside [0, {self.n_groups})")
        cut = np.asarray(self.thresholds)[group]
        return ((income <= cut) & (cut > 0)).astype(float)


def assign(policy: ThresholdPolicy, x: Covariates) -> int:
    if x.group >= policy.n_groups:
        raise InvalidInputError(f"group {x.group} out of range for {policy.n_groups} groups")
    t = policy.thresholds[x.group]
    return int(t > 0 and x.income <= t)


def null_policy(n_groups: int) -> ThresholdPolicy:
    if n_groups < 1:
        raise InvalidInputError("need at least one group")
    return ThresholdPolicy((0.0,) * n_groups)


@dataclass(frozen=True, eq=False)
class PolicyGrid:
    """Cartesian product of per-group cutoff lists in lexicographic order.

    ``index[p, j]`` is the position of policy ``p``'s group-``j`` cutoff in
    ``cutoffs[j]``; ``thresholds`` holds the cutoff values themselves.
    """

    cutoffs: tuple[tuple[float, ...], ...]
    index: np.ndarray = field(init=False, repr=False)
    thresholds: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        idx = np.array(list(itertools.product(*(range(len(c)) for c in self.cutoffs))), dtype=np.int64)
        idx = idx.reshape(-1, len(self.cutoffs))
        ths = np.column_stack([np.asarray(c)[idx[:, j]] for j, c in enumerate(self.cutoffs)])
        idx.setflags(write=False)
        ths.setflags(write=False)
        object.__setattr__(self, "index", idx)
        object.__setattr__(self, "thresholds", ths)

    @property
    def n_groups(self) -> int:
        return len(self.cutoffs)

    def __len__(self) -> int:
        return self.index.shape[0]

    def __getitem__(self, i: int) -> ThresholdPolicy:
        return ThresholdPolicy(tuple(self.thresholds[i]))

    def __iter__(self) -> Iterator[ThresholdPolicy]:
        return (self[i] for i in range(len(self)))

    @property
    def policies(self) -> list[ThresholdPolicy]:
        return list(self)

    def index_of(self, policy: ThresholdPolicy) -> int | None:
        """Grid position of ``policy`` or None if it is not a grid member."""
        if policy.n_groups != self.n_groups:
            return None
        pos = 0
        for cuts, t in zip(self.cutoffs, policy.thresholds):
            try:
                k = cuts.index(t)
            except ValueError:
                return None
            pos = pos * len(cuts) + k
        return pos

    def assignment_matrix(self, income, group) -> np.ndarray:
        """(n_records, n_policies) 0/1 matrix. Memory grows as n * G; meant for small cases."""
        income = np.asarray(income, dtype=float)
        group = np.asarray(group, dtype=np.int64)
        cut = self.thresholds[:, group].T
        return ((income[:, None] <= cut) & (cut > 0)).astype(float)


def enumerate_grid(grid_spec: Sequence[Sequence[float]]) -> PolicyGrid:
    if len(grid_spec) == 0:
        raise ConfigError("grid spec needs at least one group")
    cleaned = []
    for j, cuts in enumerate(grid_spec):
        cuts = [float(c) for c in cuts]
        if not cuts:
            raise ConfigError(f"cutoff list for group {j} is empty")
        if any(not math.isfinite(c) or c < 0 for c in cuts):
            raise ConfigError(f"cutoffs for group {j} must be finite and nonnegative")
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ConfigError(f"cutoffs for group {j} must be strictly increasing")
        cleaned.append(tuple(cuts))
    return PolicyGrid(tuple(cleaned))


def default_grid(n_groups: int = 3) -> PolicyGrid:
    return enumerate_grid([DEFAULT_CUTOFFS] * n_groups)


def uniform_cutoffs(stop: float, step: float, start: float = 0.0) -> list[float]:
    """Evenly spaced cutoffs rounded to 12 decimals so values like 0.6 land exactly."""
    count = int(round((stop - start) / step))
    return [round(start + i * step, 12) for i in range(count + 1)]
