"""Conditional-inference survival trees: permutation-test driven recursive
partitioning for right-censored data, with a calibrated synthetic waitlist
cohort generator and a reproducible CLI pipeline."""

__version__ = "0.1.0"

from .data import (
    CATEGORICAL,
    NUMERIC,
    ColumnSpec,
    Covariate,
    Dataset,
    Schema,
    SplitRule,
    SurvivalResponse,
    dataset_to_csv,
    load_csv,
    subset_weights,
)
from .errors import DataError, FitError
from .influence import encode_covariate, identity_scores, logrank_scores
from .km import KMCurve, km_estimate
from .meld import MeldRecord, SimConfig, meld_score, simulate_cohort
from .partition import (
    FitConfig,
    TestMethod,
    Tree,
    TreeNode,
    best_split,
    fit,
    predict_node,
    render_text,
)
from .permstat import (
    LinearStatistic,
    SplitTest,
    adjust_pvalues,
    linear_statistic,
    normal_cdf,
    pvalue_asymptotic,
    pvalue_exact,
    pvalue_montecarlo,
    standardize_max,
)

__all__ = [
    "CATEGORICAL",
    "NUMERIC",
    "ColumnSpec",
    "Covariate",
    "DataError",
    "Dataset",
    "FitConfig",
    "FitError",
    "KMCurve",
    "LinearStatistic",
    "MeldRecord",
    "Schema",
    "SimConfig",
    "SplitRule",
    "SplitTest",
    "SurvivalResponse",
    "TestMethod",
    "Tree",
    "TreeNode",
    "adjust_pvalues",
    "best_split",
    "dataset_to_csv",
    "encode_covariate",
    "fit",
    "identity_scores",
    "km_estimate",
    "linear_statistic",
    "load_csv",
    "logrank_scores",
    "meld_score",
    "normal_cdf",
    "predict_node",
    "pvalue_asymptotic",
    "pvalue_exact",
    "pvalue_montecarlo",
    "render_text",
    "simulate_cohort",
    "standardize_max",
    "subset_weights",
]
