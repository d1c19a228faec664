"""Explanations for fitted effect forests.

Two complementary views: split-based variable importance (which features the
trees actually use, discounted by depth) and interventional Shapley values of
the effect surface (how one query's estimate decomposes over features
against a background sample).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .causal import CausalForest, DrScores, estimate_cate_batch
from .errors import DataError, NumericError

log = logging.getLogger("glassforest")

EXACT_FEATURE_CAP = 15


@dataclass
class ImportanceTable:
    """Depth-discounted split-share importance, sorted descending.

    values sum to one unless the forest never split, in which case they are
    all zero and `degenerate` is set.
    """

    features: List[str]
    importance: np.ndarray
    degenerate: bool

    def by_feature(self) -> Dict[str, float]:
        return {f: float(v) for f, v in zip(self.features, self.importance)}

    def to_text(self) -> str:
        lines = [f"{'rank':<6}{'feature':<28}{'importance':>12}"]
        for i, (f, v) in enumerate(zip(self.features, self.importance), start=1):
            lines.append(f"{i:<6}{f:<28}{v:>12.6f}")
        if self.degenerate:
            lines.append("(forest contains no splits; importances undefined)")
        return "\n".join(lines)


def variable_importance(cf: CausalForest, feature_names: Optional[Sequence[str]] = None,
                        decay: float = 0.5, max_depth: int = 4) -> ImportanceTable:
    """Share of splits per feature at each depth, geometrically discounted.

    For depth d = 1..max_depth (root = 1), share_j(d) is feature j's
    fraction of all splits at depth d across the ensemble. The raw score
    sum_d decay^(d-1) * share_j(d) is normalised to sum one. Features the
    forest never splits on score exactly zero.
    """
    if not 0.0 < decay <= 1.0:
        raise DataError("decay must lie in (0, 1]")
    if max_depth < 1:
        raise DataError("max_depth must be positive")
    p = cf.n_features
    names = list(feature_names) if feature_names is not None else [f"x{j + 1}" for j in range(p)]
    if len(names) != p:
        raise DataError("feature_names length does not match the forest")
    counts = np.zeros((max_depth, p), dtype=np.float64)
    for tree in cf.trees:
        internal = tree.left >= 0
        if not internal.any():
            continue
        depths = tree.depth[internal]
        feats = tree.feature[internal]
        keep = depths <= max_depth
        np.add.at(counts, (depths[keep] - 1, feats[keep]), 1.0)
    totals = counts.sum(axis=1)
    share = np.zeros_like(counts)
    nonzero = totals > 0
    share[nonzero] = counts[nonzero] / totals[nonzero, None]
    weights = decay ** np.arange(max_depth)
    raw = weights @ share
    total = raw.sum()
    if total <= 0.0:
        order = np.arange(p)
        return ImportanceTable(features=[names[j] for j in order],
                               importance=np.zeros(p), degenerate=True)
    imp = raw / total
    order = np.lexsort((np.arange(p), -imp))
    return ImportanceTable(features=[names[j] for j in order],
                           importance=imp[order], degenerate=False)


@dataclass
class ShapExplanation:
    """Additive decomposition of one query's prediction.

    base_value + contributions.sum() equals `prediction`; for the sampled
    method the Monte Carlo residual is spread over contributions in
    proportion to their magnitude so the identity holds exactly, and mc_se
    reports the per-feature sampling error before that adjustment.
    """

    base_value: float
    contributions: np.ndarray
    prediction: float
    query: np.ndarray
    method: str
    mc_se: Optional[np.ndarray] = None
    n_permutations: Optional[int] = None


def select_background(x_train, max_rows: int = 500, seed: int = 0) -> np.ndarray:
    """Background sample: the training matrix, subsampled when large."""
    x_train = np.ascontiguousarray(x_train, dtype=np.float64)
    if x_train.shape[0] <= max_rows:
        return x_train.copy()
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(x_train.shape[0], size=max_rows, replace=False))
    return x_train[idx]


def _coalition_values(fn: Callable[[np.ndarray], np.ndarray], x_row: np.ndarray,
                      background: np.ndarray, masks: List[int]) -> np.ndarray:
    """Mean prediction over background rows with masked features set to x_row."""
    p = x_row.size
    nb = background.shape[0]
    block = np.empty((len(masks) * nb, p), dtype=np.float64)
    for i, mask in enumerate(masks):
        comp = block[i * nb:(i + 1) * nb]
        comp[:] = background
        for j in range(p):
            if mask >> j & 1:
                comp[:, j] = x_row[j]
    preds = np.asarray(fn(block), dtype=np.float64)
    if preds.shape != (len(masks) * nb,):
        raise DataError("prediction function returned the wrong shape")
    return preds.reshape(len(masks), nb).mean(axis=1)


def shap_exact_fn(fn: Callable[[np.ndarray], np.ndarray], x_row, background,
                  batch_masks: int = 128) -> ShapExplanation:
    """Exact interventional Shapley values by full coalition enumeration.

    fn maps an (m, p) matrix to m predictions. Capped at 15 features; the
    exact computation touches all 2^p coalitions.
    """
    x_row = np.ascontiguousarray(x_row, dtype=np.float64).reshape(-1)
    background = np.ascontiguousarray(background, dtype=np.float64)
    p = x_row.size
    if background.ndim != 2 or background.shape[1] != p:
        raise DataError("background must be a matrix with the query's feature count")
    if p > EXACT_FEATURE_CAP:
        raise NumericError(f"exact Shapley enumeration is capped at "
                           f"{EXACT_FEATURE_CAP} features (got {p})")
    n_masks = 1 << p
    v = np.empty(n_masks, dtype=np.float64)
    for start in range(0, n_masks, batch_masks):
        masks = list(range(start, min(start + batch_masks, n_masks)))
        v[start:start + len(masks)] = _coalition_values(fn, x_row, background, masks)

    fact = [math.factorial(k) for k in range(p + 1)]
    weight = np.array([fact[s] * fact[p - 1 - s] / fact[p] for s in range(p)])
    contributions = np.zeros(p, dtype=np.float64)
    popcount = np.array([bin(m).count("1") for m in range(n_masks)])
    for j in range(p):
        bit = 1 << j
        without = np.array([m for m in range(n_masks) if not m & bit])
        contributions[j] = float(np.sum(weight[popcount[without]]
                                        * (v[without | bit] - v[without])))
    return ShapExplanation(base_value=float(v[0]), contributions=contributions,
                           prediction=float(v[n_masks - 1]), query=x_row,
                           method="exact")


def shap_sampled_fn(fn: Callable[[np.ndarray], np.ndarray], x_row, background,
                    n_permutations: int = 2000, seed: int = 0) -> ShapExplanation:
    """Shapley values by permutation sampling with coalition memoisation.

    Each sampled permutation contributes one marginal per feature. The
    additive residual against the efficiency identity is spread over the
    contributions in proportion to their magnitudes, so
    base_value + sum(contributions) == prediction exactly.
    """
    x_row = np.ascontiguousarray(x_row, dtype=np.float64).reshape(-1)
    background = np.ascontiguousarray(background, dtype=np.float64)
    p = x_row.size
    if background.ndim != 2 or background.shape[1] != p:
        raise DataError("background must be a matrix with the query's feature count")
    if n_permutations < 2:
        raise DataError("need at least two permutations for a sampling error")
    rng = np.random.default_rng(seed)
    cache: Dict[int, float] = {}
    full_mask = (1 << p) - 1

    def ensure(masks: List[int]) -> None:
        new = [m for m in dict.fromkeys(masks) if m not in cache]
        if new:
            vals = _coalition_values(fn, x_row, background, new)
            for m_, v_ in zip(new, vals):
                cache[m_] = float(v_)

    ensure([0, full_mask])
    marginals = np.empty((n_permutations, p), dtype=np.float64)
    for it in range(n_permutations):
        perm = rng.permutation(p)
        chain = [0]
        m = 0
        for j in perm:
            m |= 1 << int(j)
            chain.append(m)
        ensure(chain)
        for pos, j in enumerate(perm):
            marginals[it, j] = cache[chain[pos + 1]] - cache[chain[pos]]
    contributions = marginals.mean(axis=0)
    mc_se = marginals.std(axis=0, ddof=1) / math.sqrt(n_permutations)
    base = cache[0]
    prediction = cache[full_mask]
    residual = (prediction - base) - contributions.sum()
    denom = np.abs(contributions).sum()
    if denom > 0.0:
        contributions = contributions + residual * np.abs(contributions) / denom
    else:
        contributions = contributions + residual / p
    return ShapExplanation(base_value=base, contributions=contributions,
                           prediction=prediction, query=x_row, method="sampled",
                           mc_se=mc_se, n_permutations=n_permutations)


def _forest_fn(cf: CausalForest, g: DrScores,
               threads: Optional[int] = None) -> Callable[[np.ndarray], np.ndarray]:
    def fn(xm: np.ndarray) -> np.ndarray:
        return estimate_cate_batch(cf, g, xm, threads=threads)[0]
    return fn


def shap_exact(cf: CausalForest, g: DrScores, x_row, background,
               threads: Optional[int] = None) -> ShapExplanation:
    """Exact Shapley decomposition of the forest's effect estimate at x_row."""
    return shap_exact_fn(_forest_fn(cf, g, threads), x_row, background)


def shap_sampled(cf: CausalForest, g: DrScores, x_row, background,
                 n_permutations: int = 2000, seed: int = 0,
                 threads: Optional[int] = None) -> ShapExplanation:
    """Permutation-sampled Shapley decomposition of the effect estimate."""
    return shap_sampled_fn(_forest_fn(cf, g, threads), x_row, background,
                           n_permutations=n_permutations, seed=seed)


@dataclass
class BeeswarmTable:
    """Long-form aggregate of many explanations for swarm-style display.

    features are ranked by mean absolute contribution (top `top` kept);
    each row is (feature, explanation index, feature value, contribution).
    """

    features: List[str]
    mean_abs: np.ndarray
    rows: List[tuple]


def aggregate_shap(explanations: Sequence[ShapExplanation],
                   feature_names: Sequence[str], top: int = 20) -> BeeswarmTable:
    """Rank features by mean |contribution| across explanations."""
    if not explanations:
        raise DataError("need at least one explanation to aggregate")
    p = explanations[0].contributions.size
    if len(feature_names) != p:
        raise DataError("feature_names length does not match explanations")
    for e in explanations:
        if e.contributions.size != p:
            raise DataError("explanations disagree on feature count")
    contrib = np.vstack([e.contributions for e in explanations])
    mean_abs = np.abs(contrib).mean(axis=0)
    order = np.lexsort((np.arange(p), -mean_abs))[:top]
    rows = []
    for j in order:
        for i, e in enumerate(explanations):
            rows.append((feature_names[j], i, float(e.query[j]), float(contrib[i, j])))
    return BeeswarmTable(features=[feature_names[j] for j in order],
                         mean_abs=mean_abs[order], rows=rows)
