import math

import numpy as np
import pytest

from budget_ewm import (
    CalibratedMixtureDgp,
    ConfigError,
    InvalidInputError,
    IterationError,
    Prop1Dgp,
    RuleSpec,
    ThresholdPolicy,
    constrained_optimum,
    draw_sample,
    enumerate_grid,
    ipw_scores,
    make_dgp,
    population_moments,
    run_monte_carlo,
    tradeoff_optimum,
    uniform_cutoffs,
)
from budget_ewm.simlab import iteration_seeds

from oracles import prop1_budget, prop1_welfare


@pytest.mark.parametrize("t,w,b", [(0.6, 0.6, 0.2), (0.0, 0.0, 0.0), (1.0, 1.0, 0.4)])
def test_prop1_moments(t, w, b):
    W, B = population_moments(Prop1Dgp(), ThresholdPolicy((t,)))
    assert W == pytest.approx(w, abs=1e-15) and B == pytest.approx(b, abs=1e-15)


def test_prop1_grid_moments_match_oracle():
    dgp = Prop1Dgp()
    grid = dgp.default_grid()
    w, b = dgp.grid_moments(grid)
    for i in range(0, len(grid), 37):
        t = grid.thresholds[i, 0]
        assert w[i] == pytest.approx(prop1_welfare(t), abs=1e-14)
        assert b[i] == pytest.approx(prop1_budget(t), abs=1e-14)


def test_calibrated_moments_closed_form():
    dgp = CalibratedMixtureDgp()
    W, B = population_moments(dgp, ThresholdPolicy((250.0, 500.0, 0.0)))
    assert W == pytest.approx(0.568 * 0.031 * 0.5 + 0.171 * 0.103)
    assert B == pytest.approx(0.568 * 651 * 0.5 + 0.171 * 348)
    assert population_moments(dgp, ThresholdPolicy((0.0, 0.0, 0.0))) == (0.0, 0.0)


def test_prop1_constrained_optimum_at_upper_flat_end():
    dgp = Prop1Dgp()
    opt = constrained_optimum(dgp, dgp.default_grid(), dgp.default_k)
    assert opt.policy.thresholds == (0.6,)
    assert opt.welfare == pytest.approx(0.6) and opt.budget == pytest.approx(0.2)


def test_constrained_optimum_edge_cases():
    dgp = Prop1Dgp()
    grid = dgp.default_grid()
    assert constrained_optimum(dgp, grid, -1.0).index is None
    assert constrained_optimum(dgp, grid, math.inf).policy.thresholds == (1.0,)


def test_tradeoff_optimum_limits():
    dgp = CalibratedMixtureDgp()
    grid = dgp.default_grid()
    huge = tradeoff_optimum(dgp, grid, 0.0, 1e12)
    assert huge.index == constrained_optimum(dgp, grid, 0.0).index
    free = tradeoff_optimum(dgp, grid, 0.0, 0.0)
    w, _ = dgp.grid_moments(grid)
    assert free.welfare == w.max()


def test_calibrated_optimum_drops_costliest_group():
    dgp = CalibratedMixtureDgp()
    opt = constrained_optimum(dgp, dgp.default_grid(), 0.0)
    assert opt.policy.thresholds == (0.0, 500.0, 500.0)


def test_draw_sample_deterministic():
    for dgp in (Prop1Dgp(), CalibratedMixtureDgp()):
        a, b = draw_sample(dgp, 500, 42), draw_sample(dgp, 500, 42)
        for col in ("y", "c", "m", "d", "income", "group"):
            assert np.array_equal(getattr(a, col), getattr(b, col))
        assert not np.array_equal(a.y, draw_sample(dgp, 500, 43).y)


@pytest.mark.parametrize("dgp", [Prop1Dgp(propensity=0.3), CalibratedMixtureDgp()])
def test_treated_share(dgp):
    n = 20000
    s = draw_sample(dgp, n, 0)
    p = dgp.propensity
    assert abs(s.d.mean() - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_calibrated_ipw_recovers_welfare():
    dgp = CalibratedMixtureDgp()
    s = ipw_scores(draw_sample(dgp, 100_000, 1), 0.5, kappa=dgp.kappa)
    mean_benefit = sum(w * m for w, m in zip(dgp.weights, dgp.benefit_means))
    se = s.gamma_star.std(ddof=1) / math.sqrt(len(s))
    assert abs(s.gamma_star.mean() - mean_benefit) < 3 * se


def test_dgp_validation():
    with pytest.raises(ConfigError):
        Prop1Dgp(t_low=0.7, t_high=0.6)
    with pytest.raises(ConfigError):
        CalibratedMixtureDgp(weights=(0.5, 0.6, 0.1))
    with pytest.raises(ConfigError):
        make_dgp("nope")
    with pytest.raises(ConfigError):
        make_dgp("prop1", bogus=1)
    with pytest.raises(InvalidInputError):
        draw_sample(Prop1Dgp(), 0, 0)


def test_custom_table_dgp():
    dgp = make_dgp("custom", cells=[(10, 0, 0.5, 1.0, 2.0), (20, 1, 0.5, -1.0, -3.0)])
    assert dgp.n_groups == 2
    assert population_moments(dgp, ThresholdPolicy((10, 0))) == (0.5, 1.0)
    assert population_moments(dgp, ThresholdPolicy((10, 20))) == (0.0, -0.5)
    assert len(dgp.default_grid()) == 4
    s = draw_sample(dgp, 1000, 0)
    assert set(s.income.tolist()) <= {10.0, 20.0}


def test_oracle_rule_fixed_point():
    dgp = Prop1Dgp()
    grid = enumerate_grid([uniform_cutoffs(1.0, 0.05)])
    rep = run_monte_carlo(dgp, grid, [RuleSpec("oracle")], n=200, iters=5, master_seed=0)
    m = rep.rules["oracle"]
    assert m.prob_infeasible == 0 and m.prob_suboptimal == 0 and m.avg_welfare_loss == 0


def test_iteration_seeds_order_independent():
    assert iteration_seeds(5, 3) == iteration_seeds(5, 3)
    assert iteration_seeds(5, 3) != iteration_seeds(5, 4)
    assert iteration_seeds(5, 3) != iteration_seeds(6, 3)


def test_monte_carlo_workers_match_sequential():
    dgp = Prop1Dgp()
    grid = enumerate_grid([uniform_cutoffs(1.0, 0.05)])
    rules = [RuleSpec("sample-analog"), RuleSpec("mistake-control", n_draws=500), RuleSpec("tradeoff")]
    a = run_monte_carlo(dgp, grid, rules, n=300, iters=6, master_seed=3, workers=1)
    b = run_monte_carlo(dgp, grid, rules, n=300, iters=6, master_seed=3, workers=2)
    assert a.to_dict() == b.to_dict()
    assert a.iterations == b.iterations


def test_failure_reports_iteration_and_seed():
    # every cell is missing a treatment arm, so AIPW fitting fails in iteration 0
    dgp = Prop1Dgp(propensity=1e-9)
    grid = enumerate_grid([[0.0, 0.5]])
    with pytest.raises(IterationError, match=r"iteration 0 \(sample seed \d+\)") as info:
        run_monte_carlo(dgp, grid, [RuleSpec("sample-analog")], n=5, iters=2, score_mode="aipw")
    assert info.value.iteration == 0
    assert info.value.exit_code == 4


def test_report_metrics_in_range():
    dgp = CalibratedMixtureDgp()
    rep = run_monte_carlo(dgp, None, [RuleSpec("sample-analog"), RuleSpec("tradeoff")], n=2000, iters=10)
    for m in rep.rules.values():
        for p in (m.prob_infeasible, m.prob_weak_violation, m.prob_suboptimal, m.prob_large_shortfall, m.prob_null):
            assert 0 <= p <= 1
        assert m.prob_infeasible <= m.prob_weak_violation
        assert m.loss_is_relative


def test_corollary1_schedule_on_slack_problem():
    # B(1) = 0.4 < k, so the optimum t = 1 is strictly slack
    dgp = Prop1Dgp()
    grid = enumerate_grid([uniform_cutoffs(1.0, 0.005)])
    rule = RuleSpec("mistake-control", use_alpha_schedule=True, n_draws=1000)
    rep = run_monte_carlo(dgp, grid, [rule], n=16000, iters=100, master_seed=2, k=0.45, eps_w=0.02)
    assert rep.optimum_thresholds == (1.0,)
    assert rep.rules["mistake-control"].prob_suboptimal < 0.10
