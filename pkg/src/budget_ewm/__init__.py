"""Budget-constrained selection of threshold eligibility policies from experimental data."""

from .critval import CritValRequest, CritValResult, critical_value, psd_factor, simulate_critical_value
from .errors import (
    BudgetEWMError,
    ConfigError,
    DegenerateCellError,
    EmptyGridError,
    InvalidInputError,
    IterationError,
    NotPSDError,
    NumericError,
    OverlapError,
)
from .moments import MomentTable, budget_hat, moment_table, welfare_hat
from .policy import (
    Covariates,
    PolicyGrid,
    ThresholdPolicy,
    assign,
    default_grid,
    enumerate_grid,
    null_policy,
    uniform_cutoffs,
)
from .rules import (
    RuleOutcome,
    TradeoffConfig,
    alpha_schedule,
    mistake_control_rule,
    sample_analog_rule,
    tradeoff_rule,
)
from .scoring import (
    RawRecord,
    RawSample,
    SaturatedFit,
    ScoredRecord,
    ScoredSample,
    aipw_scores,
    excess_cost_transform,
    fit_saturated,
    ipw_scores,
)
from .simlab import (
    CalibratedMixtureDgp,
    CustomTableDgp,
    MonteCarloReport,
    Prop1Dgp,
    RuleSpec,
    constrained_optimum,
    draw_sample,
    make_dgp,
    population_moments,
    run_monte_carlo,
    tradeoff_optimum,
)

__version__ = "0.1.0"
