"""Per-unit benefit and excess-cost scores from randomized eligibility data.

Two constructions are supported: inverse-propensity weighting with a known
assignment probability, and the augmented (doubly robust) version with a
saturated cell-mean model for the outcome, the cost and the propensity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateCellError, InvalidInputError, OverlapError
from .policy import Covariates

DEFAULT_KAPPA = 6000.0
DEFAULT_CLIP = 0.01


@dataclass(frozen=True)
class RawRecord:
    y: float
    c: float
    m: int
    d: int
    x: Covariates
    v: str = "0"


@dataclass(frozen=True)
class ScoredRecord:
    gamma_star: float
    r_star: float
    x: Covariates


@dataclass(frozen=True, eq=False)
class RawSample:
    """Column store of experimental records."""

    y: np.ndarray
    c: np.ndarray
    m: np.ndarray
    d: np.ndarray
    income: np.ndarray
    group: np.ndarray
    v: np.ndarray = None

    def __post_init__(self):
        n = len(self.y)
        cols = {
            "y": np.asarray(self.y, dtype=float),
            "c": np.asarray(self.c, dtype=float),
            "m": np.asarray(self.m, dtype=np.int64),
            "d": np.asarray(self.d, dtype=np.int64),
            "income": np.asarray(self.income, dtype=float),
            "group": np.asarray(self.group, dtype=np.int64),
            "v": np.full(n, "0", dtype=object) if self.v is None else np.asarray(self.v, dtype=object),
        }
        for name, col in cols.items():
            if col.shape != (n,):
                raise InvalidInputError(f"column {name} has shape {col.shape}, expected ({n},)")
            object.__setattr__(self, name, col)
        if np.any((cols["d"] != 0) & (cols["d"] != 1)):
            raise InvalidInputError("d must be 0/1")
        if np.any((cols["m"] != 0) & (cols["m"] != 1)):
            raise InvalidInputError("m must be 0/1")
        if np.any(cols["m"] > cols["d"]):
            raise InvalidInputError("enrollment m=1 requires d=1")
        if np.any((cols["d"] == 0) & (cols["c"] != 0)):
            raise InvalidInputError("cost c must be 0 when d=0")

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def from_records(cls, records: Iterable[RawRecord]) -> "RawSample":
        recs = list(records)
        return cls(
            y=[r.y for r in recs],
            c=[r.c for r in recs],
            m=[r.m for r in recs],
            d=[r.d for r in recs],
            income=[r.x.income for r in recs],
            group=[r.x.group for r in recs],
            v=[str(r.v) for r in recs],
        )

    def records(self) -> list[RawRecord]:
        return [
            RawRecord(float(self.y[i]), float(self.c[i]), int(self.m[i]), int(self.d[i]),
                      Covariates(float(self.income[i]), int(self.group[i])), str(self.v[i]))
            for i in range(len(self))
        ]


@dataclass(frozen=True, eq=False)
class ScoredSample:
    """Column store of (gamma_star, r_star, income, group)."""

    gamma_star: np.ndarray
    r_star: np.ndarray
    income: np.ndarray
    group: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gamma_star", np.asarray(self.gamma_star, dtype=float))
        object.__setattr__(self, "r_star", np.asarray(self.r_star, dtype=float))
        object.__setattr__(self, "income", np.asarray(self.income, dtype=float))
        object.__setattr__(self, "group", np.asarray(self.group, dtype=np.int64))
        n = len(self.gamma_star)
        if any(a.shape != (n,) for a in (self.r_star, self.income, self.group)):
            raise InvalidInputError("score columns must have equal length")
        if not (np.all(np.isfinite(self.gamma_star)) and np.all(np.isfinite(self.r_star))):
            raise InvalidInputError("scores must be finite")

    def __len__(self) -> int:
        return len(self.gamma_star)

    @classmethod
    def from_records(cls, records: Iterable[ScoredRecord]) -> "ScoredSample":
        recs = list(records)
        return cls([r.gamma_star for r in recs], [r.r_star for r in recs],
                   [r.x.income for r in recs], [r.x.group for r in recs])

    def records(self) -> list[ScoredRecord]:
        return [
            ScoredRecord(float(self.gamma_star[i]), float(self.r_star[i]),
                         Covariates(float(self.income[i]), int(self.group[i])))
            for i in range(len(self))
        ]

    def concat(self, other: "ScoredSample") -> "ScoredSample":
        return ScoredSample(
            np.concatenate([self.gamma_star, other.gamma_star]),
            np.concatenate([self.r_star, other.r_star]),
            np.concatenate([self.income, other.income]),
            np.concatenate([self.group, other.group]),
        )


def as_raw(records) -> RawSample:
    return records if isinstance(records, RawSample) else RawSample.from_records(records)


def as_scored(scores) -> ScoredSample:
    return scores if isinstance(scores, ScoredSample) else ScoredSample.from_records(scores)


def excess_cost_transform(c, m, kappa: float = DEFAULT_KAPPA):
    """Cost net of the status-quo spend ``kappa`` per enrollee: ``c - kappa * m``."""
    if kappa < 0:
        raise InvalidInputError("kappa must be nonnegative")
    if np.ndim(c) == 0 and np.ndim(m) == 0:
        return float(c) - kappa * float(m)
    return np.asarray(c, dtype=float) - kappa * np.asarray(m, dtype=float)


def _lookup_propensity(v: np.ndarray, propensity) -> np.ndarray:
    if isinstance(propensity, Mapping):
        try:
            p = np.array([float(propensity[str(cell)]) for cell in v])
        except KeyError as exc:
            raise InvalidInputError(f"no propensity given for cell {exc.args[0]!r}") from None
    else:
        p = np.full(len(v), float(propensity))
    bad = ~((p > 0) & (p < 1))
    if np.any(bad):
        raise OverlapError(f"propensity {p[bad][0]} outside (0, 1)")
    return p


def ipw_scores(records, propensity, kappa: float = DEFAULT_KAPPA) -> ScoredSample:
    """Inverse-propensity scores with a known assignment probability.

    ``propensity`` is a constant or a mapping from cell id to probability.
    Known propensities are never clipped: values outside (0, 1) raise.
    """
    raw = as_raw(records)
    p = _lookup_propensity(raw.v, propensity)
    d = raw.d.astype(float)
    z = excess_cost_transform(raw.c, raw.m, kappa)
    gamma = (d / p - (1.0 - d) / (1.0 - p)) * raw.y
    r = d / p * z
    return ScoredSample(gamma, r, raw.income, raw.group)


@dataclass(frozen=True, eq=False)
class SaturatedFit:
    """Cell means of one variable by (cell, arm) and clipped cell propensities."""

    cells: tuple[str, ...]
    mean0: np.ndarray
    mean1: np.ndarray
    propensity: np.ndarray
    count0: np.ndarray
    count1: np.ndarray
    _pos: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_pos", {c: i for i, c in enumerate(self.cells)})

    def cell_index(self, v: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self._pos[str(c)] for c in v], dtype=np.int64)
        except KeyError as exc:
            raise InvalidInputError(f"cell {exc.args[0]!r} was not seen when fitting") from None

    def mean(self, v, d) -> np.ndarray:
        idx = self.cell_index(v)
        d = np.asarray(d)
        return np.where(d == 1, self.mean1[idx], self.mean0[idx])

    def p_hat(self, v) -> np.ndarray:
        return self.propensity[self.cell_index(v)]


def fit_saturated(records, variable: str = "y", kappa: float = DEFAULT_KAPPA,
                  clip: float = DEFAULT_CLIP) -> SaturatedFit:
    """Saturated (cell-mean) fit of ``y`` or of the excess cost ``z``."""
    raw = as_raw(records)
    if variable == "y":
        values = raw.y
    elif variable == "z":
        values = excess_cost_transform(raw.c, raw.m, kappa)
    else:
        raise InvalidInputError(f"variable must be 'y' or 'z', got {variable!r}")
    if len(raw) == 0:
        raise InvalidInputError("cannot fit on an empty sample")
    if not 0 <= clip < 0.5:
        raise InvalidInputError("clip must lie in [0, 0.5)")

    cells = tuple(sorted({str(c) for c in raw.v}))
    pos = {c: i for i, c in enumerate(cells)}
    idx = np.array([pos[str(c)] for c in raw.v], dtype=np.int64)
    k = len(cells)
    treated = raw.d == 1
    count1 = np.bincount(idx[treated], minlength=k)
    count0 = np.bincount(idx[~treated], minlength=k)
    for i, cell in enumerate(cells):
        if count0[i] == 0:
            raise DegenerateCellError(cell, 0)
        if count1[i] == 0:
            raise DegenerateCellError(cell, 1)
    sum1 = np.bincount(idx[treated], weights=values[treated], minlength=k)
    sum0 = np.bincount(idx[~treated], weights=values[~treated], minlength=k)
    share = count1 / (count0 + count1)
    return SaturatedFit(
        cells=cells,
        mean0=sum0 / count0,
        mean1=sum1 / count1,
        propensity=np.clip(share, clip, 1.0 - clip),
        count0=count0,
        count1=count1,
    )


def aipw_scores(records, kappa: float = DEFAULT_KAPPA, clip: float = DEFAULT_CLIP,
                fit_y: SaturatedFit | None = None, fit_z: SaturatedFit | None = None) -> ScoredSample:
    """Doubly robust scores with saturated nuisance fits.

    ``fit_y``/``fit_z`` override the fitted nuisances (the propensity is
    always taken from ``fit_y``).
    """
    raw = as_raw(records)
    fit_y = fit_y if fit_y is not None else fit_saturated(raw, "y", kappa, clip)
    fit_z = fit_z if fit_z is not None else fit_saturated(raw, "z", kappa, clip)
    d = raw.d.astype(float)
    p = fit_y.p_hat(raw.v)
    weight = d / p - (1.0 - d) / (1.0 - p)
    z = excess_cost_transform(raw.c, raw.m, kappa)

    ones = np.ones(len(raw), dtype=np.int64)
    gamma = (fit_y.mean(raw.v, ones) - fit_y.mean(raw.v, 0 * ones)
             + weight * (raw.y - fit_y.mean(raw.v, raw.d)))
    r = fit_z.mean(raw.v, ones) + d / p * (z - fit_z.mean(raw.v, raw.d))
    return ScoredSample(gamma, r, raw.income, raw.group)

