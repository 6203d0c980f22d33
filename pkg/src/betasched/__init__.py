"""Single-machine scheduling of unit jobs with imperfect urgency predictions.

A library plus CLI for the beta-threshold scheduling rule and its relatives:
exact event simulation, offline oracles, closed-form expected performance,
and competitive ratios.
"""

from .analytics import (
    CompetitiveRatioReport,
    ConditionalExpectation,
    ExpectedPerformance,
    LogLossResult,
    alpha_point_cr_bound,
    competitive_ratio,
    cr_hybrid,
    cr_nonpreemptive,
    cr_nonpreemptive_cap,
    cr_preemptive,
    expected_conditional,
    expected_unconditional,
    hybrid_mix_coefficient,
    limit_excess_ratio,
    log_loss,
    search_worst_q,
)
from .domain import (
    Instance,
    Job,
    Parameters,
    PredictionModel,
    beta,
    dump_instance,
    load_instance,
    make_job,
    posterior,
    sample_instance,
    sort_for_policy,
    to_fraction,
)
from .engine import (
    RunOutcome,
    TraceEvent,
    enumerate_offline_optimum,
    expectimax_optimal,
    format_trace,
    offline_wspt,
    offline_wsrpt,
    rule_expected_cost,
    run,
)
from .experiments import (
    ExperimentConfig,
    run_arrivals,
    run_cr_sweep,
    run_sweep,
    verify_optimality,
    verify_regimes,
    verify_wsrpt,
)
from .policies import (
    EXACT_REVELATION,
    Action,
    ExactRevelation,
    Policy,
    POLICIES,
    PolicyState,
    PosteriorRevelation,
    Regime,
    beta_threshold_decide,
    classify_regime,
    get_policy,
    hybrid_decide,
    modified_beta_decide,
    nonpreemptive_decide,
    preemptive_decide,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "CompetitiveRatioReport",
    "ConditionalExpectation",
    "EXACT_REVELATION",
    "ExactRevelation",
    "ExpectedPerformance",
    "ExperimentConfig",
    "Instance",
    "Job",
    "LogLossResult",
    "POLICIES",
    "Parameters",
    "Policy",
    "PolicyState",
    "PosteriorRevelation",
    "PredictionModel",
    "Regime",
    "RunOutcome",
    "TraceEvent",
    "alpha_point_cr_bound",
    "beta",
    "beta_threshold_decide",
    "classify_regime",
    "competitive_ratio",
    "cr_hybrid",
    "cr_nonpreemptive",
    "cr_nonpreemptive_cap",
    "cr_preemptive",
    "dump_instance",
    "enumerate_offline_optimum",
    "expectimax_optimal",
    "expected_conditional",
    "expected_unconditional",
    "format_trace",
    "get_policy",
    "hybrid_decide",
    "hybrid_mix_coefficient",
    "limit_excess_ratio",
    "load_instance",
    "log_loss",
    "make_job",
    "modified_beta_decide",
    "nonpreemptive_decide",
    "offline_wspt",
    "offline_wsrpt",
    "posterior",
    "preemptive_decide",
    "rule_expected_cost",
    "run",
    "run_arrivals",
    "run_cr_sweep",
    "run_sweep",
    "sample_instance",
    "search_worst_q",
    "sort_for_policy",
    "to_fraction",
    "verify_optimality",
    "verify_regimes",
    "verify_wsrpt",
]
