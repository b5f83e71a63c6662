import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from budget_ewm import (
    CritValRequest,
    EmptyGridError,
    InvalidInputError,
    NotPSDError,
    critical_value,
    psd_factor,
    simulate_critical_value,
)
from budget_ewm.critval import lower_quantile, standard_normals

Z05 = norm.ppf(0.05)
# min of two independent N(0,1) below c with prob 0.05: 1 - (1 - Phi(c))^2 = 0.05
Z_MIN2 = norm.ppf(1 - np.sqrt(0.95))


def test_reference_values():
    assert Z05 == pytest.approx(-1.645, abs=1e-3)
    assert Z_MIN2 == pytest.approx(-1.955, abs=1e-3)


def test_identity_factor():
    f = psd_factor(np.eye(4))
    assert f.jitter == 0.0
    assert np.array_equal(f.lower, np.eye(4))


def test_rank_one_needs_jitter():
    v = np.array([1.0, 2.0, -1.0, 0.5])
    cov = np.outer(v, v)
    f = psd_factor(cov)
    assert f.jitter > 0
    assert np.abs(f.lower @ f.lower.T - cov).max() < 1e-6


def test_negative_eigenvalue_rejected():
    with pytest.raises(NotPSDError):
        psd_factor(np.array([[0.0, 1.0], [1.0, 0.0]]))  # eigenvalues +-1


def test_asymmetric_rejected():
    with pytest.raises(InvalidInputError):
        psd_factor(np.array([[1.0, 0.5], [0.0, 1.0]]))


@pytest.mark.parametrize("alpha", [0.0, 0.51, -0.1])
def test_alpha_range(alpha):
    with pytest.raises(InvalidInputError):
        CritValRequest(np.eye(1), alpha=alpha)


def test_singleton_quantile():
    c = critical_value(CritValRequest(np.eye(1), alpha=0.05, n_draws=200_000, seed=11))
    assert c == pytest.approx(Z05, abs=0.02)


def test_two_independent():
    c = critical_value(CritValRequest(np.eye(2), alpha=0.05, n_draws=200_000, seed=11))
    assert c == pytest.approx(Z_MIN2, abs=0.02)


def test_duplicated_policy_matches_singleton():
    c = critical_value(CritValRequest(np.ones((2, 2)), alpha=0.05, n_draws=200_000, seed=11))
    assert c == pytest.approx(Z05, abs=0.02)


def test_scale_free():
    cov = np.array([[4.0, 1.0], [1.0, 9.0]])
    a = critical_value(CritValRequest(cov, n_draws=5000, seed=3))
    b = critical_value(CritValRequest(cov * 1e6, n_draws=5000, seed=3))
    assert a == pytest.approx(b, abs=1e-9)


def test_zero_variance_policies_excluded():
    cov = np.diag([0.0, 1.0, 0.0])
    res = simulate_critical_value(CritValRequest(cov, n_draws=50_000, seed=1))
    assert res.n_excluded == 2
    assert res.c_alpha == pytest.approx(Z05, abs=0.03)
    with pytest.raises(EmptyGridError):
        simulate_critical_value(CritValRequest(np.zeros((2, 2))))


def test_sigma_floor_excludes_small_policies():
    cov = np.diag([1e-6, 1.0])
    res = simulate_critical_value(CritValRequest(cov, n_draws=1000, seed=0, sigma_floor=0.01))
    assert res.n_excluded == 1


def test_lower_quantile_is_order_statistic():
    vals = np.arange(1, 101, dtype=float)
    assert lower_quantile(vals, 0.05) == 5.0
    assert lower_quantile(vals, 0.051) == 6.0
    assert lower_quantile(np.arange(200_000.0), 0.05) == 9999.0


def test_deterministic():
    cov = np.array([[1.0, 0.3], [0.3, 2.0]])
    req = CritValRequest(cov, n_draws=3000, seed=99)
    assert critical_value(req) == critical_value(req)
    assert critical_value(req) != critical_value(CritValRequest(cov, n_draws=3000, seed=100))


def test_streams_independent_of_grid():
    a = standard_normals(7, [0, 1, 2], 100)
    b = standard_normals(7, [2, 0], 100)
    assert np.array_equal(a[:, 2], b[:, 0])
    assert np.array_equal(a[:, 0], b[:, 1])


def random_cov(rng, dim):
    a = rng.normal(size=(dim, dim + 2))
    return a @ a.T / dim


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dim=st.integers(1, 6),
       a1=st.floats(0.01, 0.5), a2=st.floats(0.01, 0.5))
def test_monotone_in_alpha(seed, dim, a1, a2):
    cov = random_cov(np.random.default_rng(seed), dim)
    lo, hi = sorted([a1, a2])
    c_lo = critical_value(CritValRequest(cov, alpha=lo, n_draws=2000, seed=seed))
    c_hi = critical_value(CritValRequest(cov, alpha=hi, n_draws=2000, seed=seed))
    assert c_lo <= c_hi


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), dim=st.integers(1, 6), alpha=st.floats(0.01, 0.45))
def test_negative_below_median(seed, dim, alpha):
    cov = random_cov(np.random.default_rng(seed), dim)
    assert critical_value(CritValRequest(cov, alpha=alpha, n_draws=4000, seed=seed)) < 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_nested_grids_nonincreasing(seed):
    rng = np.random.default_rng(seed)
    cov = random_cov(rng, 8)
    small = critical_value(CritValRequest(cov[:4, :4], n_draws=100_000, seed=seed))
    big = critical_value(CritValRequest(cov, n_draws=100_000, seed=seed))
    assert big <= small + 0.02
