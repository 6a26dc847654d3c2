"""Uncertainty-guided label collection with statistically valid intervals.

Collect labels where a model is unsure, then correct for the biased
sampling so the resulting estimates and confidence intervals are valid
for the whole pool. Provides batch and one-pass sequential rules, the
corrected estimators with asymptotic (sandwich) and finite-sample
(betting) intervals, uniform and labeled-only baselines, and a
Monte-Carlo harness for comparing them.
"""

from .batch import (
    InferenceReport,
    active_batch_estimate,
    build_report,
    classical_covariance,
    classical_estimate,
    empirical_increment_variance,
    gradient_increments,
    normal_quantile,
    ppi_estimate,
    sandwich_covariance,
    wald_interval,
)
from .betting import (
    BettingResult,
    IncrementBounds,
    betting_confidence_sequence,
    betting_interval,
    increment_bounds,
)
from .composite import OddsRatioInputs, odds_ratio, odds_ratio_interval, split_budget
from .core import (
    Budget,
    Example,
    Pool,
    PoolSchema,
    RngSpec,
    attach_predictions,
    load_pool,
    save_pool,
    split_pool,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateInputError,
    InsufficientDataError,
    InvalidPlanError,
    NumericalError,
    ParseError,
    SingularDesignError,
    SolverError,
    StateError,
)
from .harness import (
    BinaryResponse,
    ExperimentConfig,
    ExperimentTables,
    HeteroLinear,
    QuantileTarget,
    TrialResults,
    budget_save,
    coverage_and_width,
    gen_synthetic,
    pool_truth,
    run_experiment,
    run_trials,
)
from .losses import (
    ProblemSpec,
    WeightedSample,
    density_hessian,
    hessian_average,
    loss_grad,
    loss_hessian,
    loss_value,
    solve_weighted,
)
from .predictors import (
    ErrorModel,
    KNearestPredictor,
    LogisticPredictor,
    RidgePredictor,
    classification_uncertainty,
    crossfit_predictions,
    fit_error_model,
    make_predictor,
)
from .sampling import (
    GlmDirection,
    SamplingPlan,
    SequentialBudgetState,
    build_plan,
    calibrate_eta,
    draw_decisions,
    glm_direction,
    glm_uncertainty,
    pool_uncertainty,
    sequential_pi,
    tau_mix,
    tune_tau,
    uniform_plan,
)
from .sequential import (
    OracleError,
    SeqConfig,
    Trace,
    load_trace,
    run_sequential,
    save_trace,
    sequential_covariance,
    sequential_estimate,
    sequential_increments,
)

__version__ = "0.1.0"

__all__ = [
    "Budget",
    "Example",
    "Pool",
    "PoolSchema",
    "RngSpec",
    "attach_predictions",
    "load_pool",
    "save_pool",
    "split_pool",
    "ProblemSpec",
    "WeightedSample",
    "loss_value",
    "loss_grad",
    "loss_hessian",
    "hessian_average",
    "density_hessian",
    "solve_weighted",
    "RidgePredictor",
    "LogisticPredictor",
    "KNearestPredictor",
    "ErrorModel",
    "make_predictor",
    "fit_error_model",
    "crossfit_predictions",
    "classification_uncertainty",
    "SamplingPlan",
    "GlmDirection",
    "SequentialBudgetState",
    "calibrate_eta",
    "tau_mix",
    "tune_tau",
    "glm_direction",
    "glm_uncertainty",
    "pool_uncertainty",
    "sequential_pi",
    "draw_decisions",
    "build_plan",
    "uniform_plan",
    "active_batch_estimate",
    "ppi_estimate",
    "classical_estimate",
    "gradient_increments",
    "sandwich_covariance",
    "classical_covariance",
    "empirical_increment_variance",
    "wald_interval",
    "normal_quantile",
    "InferenceReport",
    "build_report",
    "SeqConfig",
    "Trace",
    "OracleError",
    "run_sequential",
    "sequential_estimate",
    "sequential_increments",
    "sequential_covariance",
    "save_trace",
    "load_trace",
    "odds_ratio",
    "OddsRatioInputs",
    "odds_ratio_interval",
    "split_budget",
    "IncrementBounds",
    "BettingResult",
    "increment_bounds",
    "betting_interval",
    "betting_confidence_sequence",
    "BinaryResponse",
    "HeteroLinear",
    "QuantileTarget",
    "gen_synthetic",
    "ExperimentConfig",
    "TrialResults",
    "ExperimentTables",
    "run_trials",
    "run_experiment",
    "coverage_and_width",
    "pool_truth",
    "budget_save",
    "ConfigError",
    "DataError",
    "ParseError",
    "InsufficientDataError",
    "DegenerateInputError",
    "InvalidPlanError",
    "StateError",
    "NumericalError",
    "SolverError",
    "SingularDesignError",
    "__version__",
]
