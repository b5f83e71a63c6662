"""Simulated critical value for the infimum of the normalized budget process.

Each policy gets its own counter-based normal stream (Philox keyed by the
seed and the policy's grid index), and the covariance is factored by a
lower-triangular Cholesky factor. Together these make the draw for policy
``j`` depend only on policies ``0..j``, so appending policies to a grid
leaves earlier draws untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyGridError, InvalidInputError, NotPSDError

JITTER_SCHEDULE = (0.0, 1e-10, 1e-8, 1e-6)
_CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True, eq=False)
class Factor:
    lower: np.ndarray
    jitter: float


def psd_factor(cov, schedule=JITTER_SCHEDULE) -> Factor:
    """Cholesky factor of ``cov + eps*I`` for the first workable ``eps`` in the schedule.

    Schedule entries are relative to ``trace(cov) / dim``.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidInputError("covariance must be square")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise InvalidInputError("covariance must be symmetric")
    dim = cov.shape[0]
    scale = max(np.trace(cov) / dim, 0.0)
    for rel in schedule:
        eps = rel * scale
        try:
            lower = np.linalg.cholesky(cov + eps * np.eye(dim))
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(lower)):
            return Factor(lower, float(eps))
    raise NotPSDError("covariance is not positive semidefinite for any jitter in the schedule")


def policy_stream(seed: int, policy_index: int) -> np.random.Generator:
    key = (int(seed) % 2**64) | (int(policy_index) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def standard_normals(seed: int, policy_indices, n_draws: int) -> np.ndarray:
    """(n_draws, len(policy_indices)) matrix; column j comes from policy j's stream."""
    out = np.empty((n_draws, len(policy_indices)))
    for col, j in enumerate(policy_indices):
        out[:, col] = policy_stream(seed, j).standard_normal(n_draws)
    return out


def default_sigma_floor(sigma) -> float:
    sigma = np.asarray(sigma, dtype=float)
    return 1e-12 * float(sigma.max()) if sigma.size else 0.0


def normalizable(sigma, sigma_floor: float | None = None) -> np.ndarray:
    """Policies whose standard deviation is large enough to normalize by."""
    sigma = np.asarray(sigma, dtype=float)
    floor = default_sigma_floor(sigma) if sigma_floor is None else sigma_floor
    return (sigma >= floor) & (sigma > 0)


@dataclass(frozen=True, eq=False)
class CritValRequest:
    cov_b: np.ndarray
    alpha: float = 0.05
    n_draws: int = 10_000
    seed: int = 0
    sigma_floor: float | None = None

    def __post_init__(self):
        cov = np.asarray(self.cov_b, dtype=float)
        object.__setattr__(self, "cov_b", cov)
        if not 0 < self.alpha <= 0.5:
            raise InvalidInputError(f"alpha must lie in (0, 0.5], got {self.alpha}")
        if int(self.n_draws) < 1:
            raise InvalidInputError("n_draws must be positive")
        if self.sigma_floor is not None and self.sigma_floor < 0:
            raise InvalidInputError("sigma_floor must be nonnegative")


@dataclass(frozen=True)
class CritValResult:
    c_alpha: float
    jitter: float
    n_excluded: int
    n_policies: int
    n_draws: int


def simulate_minima(req: CritValRequest) -> tuple[np.ndarray, Factor, np.ndarray]:
    """Minimum over surviving policies of h(g)/sigma(g) for each draw, h ~ N(0, cov_b)."""
    sigma = np.sqrt(np.maximum(np.diag(req.cov_b), 0.0))
    keep = np.flatnonzero(normalizable(sigma, req.sigma_floor))
    if keep.size == 0:
        raise EmptyGridError("no policy has a usable budget standard deviation")
    factor = psd_factor(req.cov_b[np.ix_(keep, keep)])
    z = standard_normals(req.seed, keep, int(req.n_draws))
    scaled = factor.lower.T / sigma[keep]
    minima = np.empty(z.shape[0])
    rows = max(1, _CHUNK_ENTRIES // keep.size)
    for start in range(0, z.shape[0], rows):
        stop = start + rows
        minima[start:stop] = (z[start:stop] @ scaled).min(axis=1)
    return minima, factor, keep


def lower_quantile(values, alpha: float) -> float:
    """Order statistic at 1-based rank ceil(alpha * n), no interpolation."""
    values = np.asarray(values, dtype=float)
    rank = max(1, math.ceil(alpha * values.size - 1e-9))
    return float(np.partition(values, rank - 1)[rank - 1])


def simulate_critical_value(req: CritValRequest) -> CritValResult:
    minima, factor, keep = simulate_minima(req)
    n_pol = req.cov_b.shape[0]
    return CritValResult(
        c_alpha=lower_quantile(minima, req.alpha),
        jitter=factor.jitter,
        n_excluded=int(n_pol - keep.size),
        n_policies=int(n_pol),
        n_draws=int(req.n_draws),
    )


def critical_value(req: CritValRequest) -> float:
    return simulate_critical_value(req).c_alpha
