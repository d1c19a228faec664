"""Inherently interpretable views of a fitted effect forest.

Four routes from black box to something a person can read: pick the member
tree that best summarises the ensemble, distill the ensemble into one fresh
tree, trace how much accuracy each simplification costs (the Rashomon
curve), and project the scores onto a linear model with honest standard
errors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .causal import (CausalForest, CenteredData, DrScores, dr_scores,
                     estimate_cate_batch)
from .data import Dataset
from .errors import DataError, NumericError
from .forest import (Forest, ForestParams, Tree, fit_forest, predict,
                     predict_oob, r_loss, tree_predict)
from .xai import ImportanceTable

log = logging.getLogger("glassforest")


@dataclass
class RepresentativeTree:
    """The member tree whose own predictions track the residualized data best."""

    index: int
    tree: Tree
    loss: float
    member_losses: np.ndarray


def representative_tree(cf: CausalForest, x_train, c: CenteredData) -> RepresentativeTree:
    """Pick the member tree with the lowest residual-on-residual loss.

    Every member tree predicts the full training matrix from its honest leaf
    values; ties break toward the lowest tree index.
    """
    if cf.num_trees == 0:
        raise NumericError("empty forest has no representative tree")
    x_train = np.ascontiguousarray(x_train, dtype=np.float64)
    losses = np.empty(cf.num_trees, dtype=np.float64)
    for i, tree in enumerate(cf.trees):
        losses[i] = r_loss(tree_predict(tree, x_train), c.y_tilde, c.w_tilde)
    best = int(np.argmin(losses))  # argmin returns the first minimum
    return RepresentativeTree(index=best, tree=cf.trees[best],
                              loss=float(losses[best]), member_losses=losses)


def default_student_params(cf: CausalForest) -> ForestParams:
    """Single adaptive CART student: full sample, no honesty, all features."""
    return ForestParams(num_trees=1, subsample_ratio=1.0, honesty=False,
                        min_leaf_size=max(5, cf.params.min_leaf_size),
                        max_depth=5, mtry=cf.n_features, seed=cf.params.seed)


def distill_tree(cf: CausalForest, g: DrScores, x_train,
                 student_params: Optional[ForestParams] = None,
                 threads: Optional[int] = None) -> Forest:
    """Fit one plain regression tree to the forest's effect estimates.

    The teacher signal is the plug-in effect estimate at every training row;
    the student is a single variance-reduction CART tree grown without
    honesty on the full sample.
    """
    x_train = np.ascontiguousarray(x_train, dtype=np.float64)
    params = student_params if student_params is not None else default_student_params(cf)
    if params.num_trees != 1 or params.honesty or params.subsample_ratio != 1.0:
        raise DataError("student must be a single non-honest full-sample tree")
    teacher, _ = estimate_cate_batch(cf, g, x_train, threads=threads)
    ones = np.ones(x_train.shape[0], dtype=np.float64)
    return fit_forest(x_train, teacher, ones, params, kind="distilled",
                      threads=threads)


@dataclass
class RashomonPoint:
    """One model on the accuracy-simplicity trade-off curve.

    relative_r_loss is this model's residual-on-residual loss minus the
    baseline's. abs_error_quantiles summarises |prediction - baseline
    prediction| over the evaluation rows after trimming the top 2.5% of
    absolute errors; the untrimmed quantiles are kept alongside.
    """

    label: str
    ensemble_size: int
    relative_r_loss: float
    abs_error_quantiles: Dict[str, float]
    abs_error_quantiles_untrimmed: Dict[str, float]


@dataclass
class RashomonCurve:
    points: List[RashomonPoint]
    baseline_size: int
    baseline_r_loss: float


def _error_quantiles(err: np.ndarray) -> Tuple[Dict[str, float], Dict[str, float]]:
    err = np.sort(np.abs(err))
    untrimmed = {f"p{q}": float(np.quantile(err, q / 100)) for q in (25, 50, 75)}
    n_trim = int(math.floor(0.025 * err.size))
    kept = err[:err.size - n_trim] if n_trim else err
    trimmed = {f"p{q}": float(np.quantile(kept, q / 100)) for q in (25, 50, 75)}
    return trimmed, untrimmed


def rashomon_curve(d: Dataset, c: CenteredData, params: ForestParams,
                   sizes: Sequence[int], baseline_size: int, eval_x,
                   score_formula: str = "paper",
                   student_params: Optional[ForestParams] = None,
                   include_distilled: bool = True,
                   threads: Optional[int] = None) -> RashomonCurve:
    """Loss and prediction drift of smaller ensembles against a big baseline.

    One forest is grown at baseline_size; because each tree's stream is
    keyed by (seed, tree index), the leading k trees are bit-identical to a
    fresh fit with num_trees = k, so every smaller ensemble is a prefix of
    the baseline. All points share the same centered data. The curve always
    carries the baseline's own (identically zero) point, plus a distilled
    single-tree point unless disabled.
    """
    sizes = sorted(set(int(s) for s in sizes))
    if not sizes:
        raise DataError("need at least one ensemble size")
    if sizes[0] < 1:
        raise DataError("ensemble sizes must be positive")
    if sizes[-1] > baseline_size:
        raise DataError("ensemble sizes cannot exceed the baseline size")
    eval_x = np.ascontiguousarray(eval_x, dtype=np.float64)

    from .causal import fit_causal_forest  # local import to avoid cycle at module load
    base_params = replace(params, num_trees=baseline_size)
    baseline = fit_causal_forest(d, c, base_params, threads=threads)
    base_train = predict(baseline, d.x)
    base_eval = predict(baseline, eval_x)
    base_loss = r_loss(base_train, c.y_tilde, c.w_tilde)

    if baseline_size not in sizes:
        sizes.append(baseline_size)
    points = []
    for k in sizes:
        sub = Forest(trees=baseline.trees[:k], params=replace(params, num_trees=k),
                     kind=baseline.kind, n_features=baseline.n_features,
                     n_train=baseline.n_train)
        loss = r_loss(predict(sub, d.x), c.y_tilde, c.w_tilde)
        trimmed, untrimmed = _error_quantiles(predict(sub, eval_x) - base_eval)
        points.append(RashomonPoint(label=str(k), ensemble_size=k,
                                    relative_r_loss=loss - base_loss,
                                    abs_error_quantiles=trimmed,
                                    abs_error_quantiles_untrimmed=untrimmed))
    if include_distilled:
        if d.treatment_is_binary:
            g = dr_scores(d, c, formula=score_formula)
        else:
            g = dr_scores(d, c, tau_hat_oob=predict_oob(baseline, d.x).values)
        student = distill_tree(baseline, g, d.x, student_params, threads=threads)
        loss = r_loss(predict(student, d.x), c.y_tilde, c.w_tilde)
        trimmed, untrimmed = _error_quantiles(predict(student, eval_x) - base_eval)
        points.append(RashomonPoint(label="distilled", ensemble_size=1,
                                    relative_r_loss=loss - base_loss,
                                    abs_error_quantiles=trimmed,
                                    abs_error_quantiles_untrimmed=untrimmed))
    return RashomonCurve(points=points, baseline_size=baseline_size,
                         baseline_r_loss=base_loss)


def select_features_by_importance(table: ImportanceTable) -> List[str]:
    """Features scoring strictly above the mean importance (1/p when proper).

    A uniform table selects nothing; that and a degenerate all-zero table
    log a warning and return an empty list.
    """
    if table.degenerate:
        log.warning("importance table is degenerate (no splits); selecting nothing")
        return []
    mean = float(table.importance.mean())
    chosen = [f for f, v in zip(table.features, table.importance) if v > mean]
    if not chosen:
        log.warning("importance is uniform; no feature scores above the mean")
    return chosen


@dataclass
class BlpRow:
    name: str
    coef: float
    se: float
    t_stat: float
    p_value: float
    stars: str


@dataclass
class BlpResult:
    """Best linear projection of the scores with robust standard errors.

    n_used counts the rows kept after rare-category exclusion; dropped rows
    and levels are recorded in excluded_levels as (feature, level, count).
    reference_levels maps each categorical feature to its omitted level.
    """

    rows: List[BlpRow]
    n_used: int
    n_dropped: int
    excluded_levels: List[tuple]
    reference_levels: Dict[str, float]

    def to_text(self) -> str:
        lines = [f"{'term':<28}{'coef':>14}{'se':>12}{'t':>10}{'p':>10}  "]
        for r in self.rows:
            lines.append(f"{r.name:<28}{r.coef:>14.6g}{r.se:>12.4g}"
                         f"{r.t_stat:>10.3f}{r.p_value:>10.4f}  {r.stars}")
        lines.append(f"n = {self.n_used} (dropped {self.n_dropped} rows in rare categories)")
        lines.append("significance: *** p<0.01, ** p<0.05, * p<0.1")
        return "\n".join(lines)


def _stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def _normal_p(t: float) -> float:
    return math.erfc(abs(t) / math.sqrt(2.0))


def _offending_columns(x: np.ndarray, names: List[str]) -> List[str]:
    """Columns that add no rank on top of their predecessors."""
    bad = []
    rank = 0
    kept: List[int] = []
    for j in range(x.shape[1]):
        trial = x[:, kept + [j]]
        r = np.linalg.matrix_rank(trial)
        if r > rank:
            rank = r
            kept.append(j)
        else:
            bad.append(names[j])
    return bad


def blp(g: DrScores, x, feature_names: Sequence[str],
        categorical: Sequence[str] = (), min_category_count: int = 100) -> BlpResult:
    """OLS of the doubly robust scores on selected features, HC3 errors.

    Categorical features expand to dummies: the most frequent level is the
    omitted reference, and levels with fewer than min_category_count
    observations are dropped entirely (their rows leave the regression and
    are recorded). p-values are two-sided normal. Raises NumericError on a
    rank-deficient design, naming the offending columns.
    """
    gamma = np.asarray(g.gamma, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != gamma.size:
        raise DataError("design rows must match the score vector")
    feature_names = list(feature_names)
    if len(feature_names) != x.shape[1]:
        raise DataError("feature_names length does not match the design")
    cat_set = set(categorical)
    unknown = cat_set - set(feature_names)
    if unknown:
        raise DataError(f"categorical features {sorted(unknown)} are not in feature_names")

    n = gamma.size
    keep = np.ones(n, dtype=bool)
    excluded: List[tuple] = []
    reference: Dict[str, float] = {}
    dummy_cols: List[np.ndarray] = []
    dummy_names: List[str] = []
    numeric_idx = [j for j, f in enumerate(feature_names) if f not in cat_set]

    for j, f in enumerate(feature_names):
        if f not in cat_set:
            continue
        col = x[:, j]
        levels, counts = np.unique(col, return_counts=True)
        ok = counts >= min_category_count
        for lev, cnt in zip(levels[~ok], counts[~ok]):
            excluded.append((f, float(lev), int(cnt)))
            keep &= col != lev
        levels, counts = levels[ok], counts[ok]
        if levels.size == 0:
            raise DataError(f"categorical feature {f!r} has no level with at least "
                            f"{min_category_count} observations")
        ref = levels[int(np.argmax(counts))]
        reference[f] = float(ref)
        for lev in levels:
            if lev == ref:
                continue
            dummy_cols.append((col == lev).astype(np.float64))
            dummy_names.append(f"{f}={lev:g}")

    if not keep.any():
        raise DataError("rare-category exclusion removed every row")
    names = ["intercept"] + [feature_names[j] for j in numeric_idx] + dummy_names
    design = np.column_stack(
        [np.ones(n)] + [x[:, j] for j in numeric_idx] + dummy_cols)[keep]
    yv = gamma[keep]
    n_used = int(keep.sum())
    k = design.shape[1]
    if n_used <= k:
        raise NumericError(f"need more rows ({n_used}) than coefficients ({k})")

    rank = np.linalg.matrix_rank(design)
    if rank < k:
        bad = _offending_columns(design, names)
        raise NumericError(f"design matrix is rank deficient; offending columns: {bad}")

    xtx = design.T @ design
    xtx_inv = np.linalg.inv(xtx)
    coef = xtx_inv @ (design.T @ yv)
    resid = yv - design @ coef
    leverage = np.einsum("ij,jk,ik->i", design, xtx_inv, design)
    denom = np.clip(1.0 - leverage, 1e-8, None)
    if (1.0 - leverage < 1e-8).any():
        log.warning("HC3: %d observations with leverage ~= 1 were stabilised",
                    int((1.0 - leverage < 1e-8).sum()))
    meat = design.T @ (design * (resid / denom)[:, None] ** 2)
    cov = xtx_inv @ meat @ xtx_inv
    se = np.sqrt(np.diag(cov))
    rows = []
    for name, b, s in zip(names, coef, se):
        t = b / s if s > 0 else math.inf if b != 0 else 0.0
        p = _normal_p(t)
        rows.append(BlpRow(name=name, coef=float(b), se=float(s),
                           t_stat=float(t), p_value=float(p), stars=_stars(p)))
    return BlpResult(rows=rows, n_used=n_used, n_dropped=n - n_used,
                     excluded_levels=excluded, reference_levels=reference)
