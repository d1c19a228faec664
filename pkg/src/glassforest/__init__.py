"""Honest causal forests with a transparency toolkit.

Estimation: locally centered honest forests over residualized data, doubly
robust scores, kernel-weighted effect estimates. Transparency: variable
importance, Shapley explanations, representative and distilled trees,
Rashomon curves, best linear projections, and refutation tests.
"""

from .causal import (AteEstimate, CateEstimate, CausalForest, CenteredData,
                     DrScores, KernelWeights, PipelineResult, dr_scores,
                     estimate_ate, estimate_cate, estimate_cate_batch,
                     fit_causal_forest, kernel_weights, local_center,
                     run_pipeline)
from .data import (ColumnSummary, Dataset, DatasetSummary, SchemaConfig,
                   impute_median, load_csv, parse_schema_file, summarize,
                   write_csv)
from .diagnostics import (OverlapReport, ProfileBin, RefutationResult,
                          dummy_outcome, overlap_check, placebo_treatment)
from .errors import DataError, GlassforestError, NumericError, UsageError
from .forest import (Forest, ForestParams, OobResult, Tree,
                     fit_regression_forest, load_forest, predict, predict_oob,
                     r_loss, save_forest, tree_predict)
from .iai import (BlpResult, BlpRow, RashomonCurve, RashomonPoint,
                  RepresentativeTree, blp, distill_tree, rashomon_curve,
                  representative_tree, select_features_by_importance)
from .synth import DgpSpec, confounded_preset, generate, oracle_cate, write_truth
from .xai import (BeeswarmTable, ImportanceTable, ShapExplanation,
                  aggregate_shap, select_background, shap_exact, shap_exact_fn,
                  shap_sampled, shap_sampled_fn, variable_importance)

__version__ = "0.1.0"

__all__ = [
    "AteEstimate", "BeeswarmTable", "BlpResult", "BlpRow", "CateEstimate",
    "CausalForest", "CenteredData", "ColumnSummary", "DataError", "Dataset",
    "DatasetSummary", "DgpSpec", "DrScores", "Forest", "ForestParams",
    "GlassforestError", "ImportanceTable", "KernelWeights", "NumericError",
    "OobResult", "OverlapReport", "PipelineResult", "ProfileBin",
    "RashomonCurve", "RashomonPoint", "RefutationResult", "RepresentativeTree",
    "SchemaConfig", "ShapExplanation", "Tree", "UsageError", "aggregate_shap",
    "blp", "confounded_preset", "distill_tree", "dr_scores", "dummy_outcome",
    "estimate_ate", "estimate_cate", "estimate_cate_batch", "fit_causal_forest",
    "fit_regression_forest", "generate", "impute_median", "kernel_weights",
    "load_csv", "load_forest", "local_center", "oracle_cate", "overlap_check",
    "parse_schema_file", "placebo_treatment", "predict", "predict_oob",
    "r_loss", "rashomon_curve", "representative_tree", "run_pipeline",
    "save_forest", "select_background", "select_features_by_importance",
    "shap_exact", "shap_exact_fn", "shap_sampled", "shap_sampled_fn",
    "summarize", "tree_predict", "variable_importance", "write_csv",
    "write_truth",
]
