"""Multiclass sparse multinomial logistic classifiers.

Penalized maximum-likelihood estimation with group Slope, sparse group Slope
and nuclear penalties, plus a seeded simulation harness for risk scaling
experiments.
"""

from .core import (
    CoefficientMatrix,
    ConvergenceError,
    Dataset,
    DoubleRowSparse,
    FitResult,
    Gaussian,
    GlobalRowSparse,
    GroupSlope,
    InvalidInputError,
    LowRank,
    Nuclear,
    NumericError,
    PenaltySpec,
    Rademacher,
    RiskReport,
    RowwiseSlope,
    SparseGroupSlope,
    StudentT,
    SyntheticSpec,
    center_rows,
    group_lasso,
    lasso,
    load_coefficients,
    load_dataset_csv,
    rng_stream,
    save_coefficients,
    save_dataset_csv,
    sparse_group_lasso,
)
from .evaluation import (
    MarginReport,
    PenaltyRecipe,
    SecondMomentReport,
    aggregate_rows,
    estimate_bayes_risk,
    generate,
    rademacher_mc,
    rate_slope,
    risk_report,
    scaling_experiment,
    second_moments,
)
from .model import ModelBounds, class_probs, grad_nll, kl_divergence, nll, predict
from .penalties import (
    WeightConfig,
    dual_norm,
    group_slope_weights,
    nuclear_lambda,
    penalty_value,
    prox_group_slope,
    prox_nuclear,
    prox_sorted_l1,
    prox_sparse_group_slope,
    sparse_group_slope_weights,
)
from .solver import SolverConfig, fit, fit_exhaustive_complexity

__version__ = "0.1.0"
