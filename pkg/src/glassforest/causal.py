"""Heterogeneous effect estimation with locally centered forests.

The estimation route: residualize outcome and treatment with out-of-bag
nuisance forest predictions, grow effect trees on the residualized data,
convert units to doubly robust scores, and read effects off as
forest-kernel weighted averages of those scores.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from . import _kernels
from .data import Dataset
from .errors import DataError, NumericError
from .forest import (Forest, ForestParams, fit_forest, fit_regression_forest,
                     predict, predict_oob, _resolve_threads)

log = logging.getLogger("glassforest")

DEFAULT_CLAMP = (0.02, 0.98)

# The effect forest is a Forest whose trees regress residual outcomes on
# residual treatments; the alias marks intent at call sites.
CausalForest = Forest


@dataclass
class CenteredData:
    """Residualized data plus the nuisance predictions that produced it.

    e_hat is stored after clamping (binary treatment only); e_hat_raw keeps
    the unclamped out-of-bag values for overlap diagnostics. For binary
    treatment m_hat_1 / m_hat_0 hold per-arm outcome predictions for every
    unit; they are None otherwise.
    """

    y_tilde: np.ndarray
    w_tilde: np.ndarray
    e_hat: np.ndarray
    m_hat: np.ndarray
    m_hat_1: Optional[np.ndarray]
    m_hat_0: Optional[np.ndarray]
    e_hat_raw: np.ndarray
    treatment_is_binary: bool
    n_clamped: int
    clamp: Tuple[float, float]
    n_oob_backfilled: int

    @property
    def n(self) -> int:
        return self.y_tilde.shape[0]


@dataclass
class DrScores:
    """Per-unit doubly robust scores and the formula that produced them."""

    gamma: np.ndarray
    formula_tag: str

    @property
    def n(self) -> int:
        return self.gamma.shape[0]


@dataclass
class CateEstimate:
    point: float
    se: float


@dataclass
class AteEstimate:
    point: float
    se: float


@dataclass
class KernelWeights:
    """Normalised co-leaf weights over training units for one query row."""

    weights: np.ndarray
    query: np.ndarray


def _nuisance_matrix(d: Dataset) -> np.ndarray:
    if d.nuisance_feature_idx is not None:
        return np.ascontiguousarray(d.x[:, d.nuisance_feature_idx])
    return d.x


def local_center(d: Dataset, nuisance_params: ForestParams,
                 clamp: Tuple[float, float] = DEFAULT_CLAMP,
                 threads: Optional[int] = None) -> CenteredData:
    """Residualize outcome and treatment with out-of-bag forest predictions.

    Fits m: y ~ x and e: w ~ x, forms y_tilde = y - m_oob and
    w_tilde = w - e_hat. For binary treatment e_hat is clamped into `clamp`
    (with a logged overlap warning when that bites) and per-arm outcome
    forests are fitted on the treated / control subsets; own-arm predictions
    are out-of-bag, cross-arm predictions come from the full forest. The
    four forests consume consecutive seeds starting at nuisance_params.seed.

    Raises DataError when a binary treatment has fewer than
    2 * min_leaf_size units in either arm.
    """
    if np.isnan(d.x).any():
        raise DataError("features contain missing values; run impute_median first")
    x = _nuisance_matrix(d)
    binary = d.treatment_is_binary
    lo, hi = clamp
    if not (0.0 < lo < hi < 1.0):
        raise DataError("clamp bounds must satisfy 0 < lo < hi < 1")

    m_forest = fit_regression_forest(x, d.y, nuisance_params, threads=threads)
    m_oob = predict_oob(m_forest, x)
    e_params = replace(nuisance_params, seed=nuisance_params.seed + 1)
    e_forest = fit_regression_forest(x, d.w, e_params, threads=threads)
    e_oob = predict_oob(e_forest, x)
    n_backfilled = int(m_oob.undefined.sum() + e_oob.undefined.sum())

    e_raw = e_oob.values
    m_hat_1 = None
    m_hat_0 = None
    n_clamped = 0
    if binary:
        treated = d.w == 1.0
        n1 = int(treated.sum())
        n0 = d.n - n1
        need = 2 * nuisance_params.min_leaf_size
        if n1 < need or n0 < need:
            raise DataError(f"binary treatment needs at least {need} units per arm "
                            f"(got {n1} treated, {n0} control)")
        e_hat = np.clip(e_raw, lo, hi)
        n_clamped = int(np.sum((e_raw < lo) | (e_raw > hi)))
        if n_clamped:
            log.warning("overlap: clamped %d of %d propensity estimates into [%g, %g]",
                        n_clamped, d.n, lo, hi)
        m1_params = replace(nuisance_params, seed=nuisance_params.seed + 2)
        m0_params = replace(nuisance_params, seed=nuisance_params.seed + 3)
        f1 = fit_regression_forest(x[treated], d.y[treated], m1_params, threads=threads)
        f0 = fit_regression_forest(x[~treated], d.y[~treated], m0_params, threads=threads)
        m_hat_1 = predict(f1, x)
        m_hat_0 = predict(f0, x)
        oob1 = predict_oob(f1, x[treated])
        oob0 = predict_oob(f0, x[~treated])
        m_hat_1[treated] = oob1.values
        m_hat_0[~treated] = oob0.values
        n_backfilled += int(oob1.undefined.sum() + oob0.undefined.sum())
    else:
        e_hat = e_raw.copy()

    return CenteredData(
        y_tilde=d.y - m_oob.values,
        w_tilde=d.w - e_hat,
        e_hat=e_hat,
        m_hat=m_oob.values,
        m_hat_1=m_hat_1,
        m_hat_0=m_hat_0,
        e_hat_raw=e_raw,
        treatment_is_binary=binary,
        n_clamped=n_clamped,
        clamp=(lo, hi),
        n_oob_backfilled=n_backfilled,
    )


def dr_scores(d: Dataset, c: CenteredData, formula: str = "paper",
              tau_hat_oob: Optional[np.ndarray] = None) -> DrScores:
    """Per-unit doubly robust scores.

    Binary treatment supports two formulas. 'paper' augments the inverse
    propensity term with the effect-scale correction

        gamma = w y / e - (1-w) y / (1-e) + d - (w - e) / (e (1-e)) * d

    with d = m1 - m0, while 'aipw' uses the per-arm corrections

        gamma = d + w (y - m1) / e - (1-w) (y - m0) / (1-e).

    Continuous treatment ignores `formula` and needs the effect forest's
    out-of-bag predictions:

        gamma = tau + w~ (y~ - w~ tau) / v,   v = mean(w~^2).
    """
    if c.n != d.n:
        raise DataError("centered data does not match the dataset")
    if d.treatment_is_binary:
        if c.m_hat_1 is None or c.m_hat_0 is None:
            raise DataError("binary scores need per-arm outcome predictions")
        w, y, e = d.w, d.y, c.e_hat
        delta = c.m_hat_1 - c.m_hat_0
        if formula == "paper":
            ipw = w * y / e - (1.0 - w) * y / (1.0 - e)
            gamma = ipw + delta - (w - e) / (e * (1.0 - e)) * delta
        elif formula == "aipw":
            gamma = delta + w * (y - c.m_hat_1) / e - (1.0 - w) * (y - c.m_hat_0) / (1.0 - e)
        else:
            raise DataError(f"unknown score formula {formula!r}")
        return DrScores(gamma=gamma, formula_tag=formula)

    if tau_hat_oob is None:
        raise DataError("continuous-treatment scores need tau_hat_oob from the effect forest")
    tau_hat_oob = np.asarray(tau_hat_oob, dtype=np.float64)
    if tau_hat_oob.shape != (d.n,):
        raise DataError("tau_hat_oob length does not match the dataset")
    v = float(np.mean(c.w_tilde ** 2))
    if v <= 0.0:
        raise NumericError("treatment residuals have zero variance; scores undefined")
    gamma = tau_hat_oob + c.w_tilde * (c.y_tilde - c.w_tilde * tau_hat_oob) / v
    return DrScores(gamma=gamma, formula_tag="continuous")


def fit_causal_forest(d: Dataset, c: CenteredData, params: ForestParams,
                      threads: Optional[int] = None) -> CausalForest:
    """Grow honest effect trees on the residualized data.

    Splits maximise the reduction in (1/n) sum (y~ - w~ tau)^2 with each
    candidate leaf solving tau = sum(w~ y~) / sum(w~^2); leaves whose
    residual-treatment mass sum(w~^2) would be zero are never created.
    """
    if c.n != d.n:
        raise DataError("centered data does not match the dataset")
    wy = c.w_tilde * c.y_tilde
    w2 = c.w_tilde * c.w_tilde
    return fit_forest(d.x, wy, w2, params, kind="causal", threads=threads)


def kernel_weights(cf: CausalForest, x_row) -> KernelWeights:
    """Adaptive kernel weights at one query: per-tree co-leaf shares, averaged
    over trees and normalised to sum one."""
    x_row = np.ascontiguousarray(x_row, dtype=np.float64).reshape(-1)
    if x_row.shape[0] != cf.n_features:
        raise DataError("query row has wrong number of features")
    if cf.num_trees == 0:
        raise NumericError("cannot weight with an empty forest")
    roots, feature, threshold, left, right, _value, e_start, e_end, est_ids = cf.flat()
    w = _kernels.weights_single(x_row, roots, feature, threshold, left, right,
                                e_start, e_end, est_ids, cf.n_train)
    return KernelWeights(weights=w, query=x_row)


def estimate_cate_batch(cf: CausalForest, g: DrScores, x,
                        threads: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Plug-in effects and kernel standard errors for a batch of query rows.

    Returns (points, ses) with

        tau(x) = sum_i a_i(x) gamma_i
        se(x)  = sqrt(sum_i a_i(x)^2 (gamma_i - tau(x))^2).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cf.n_features:
        raise DataError("query matrix has wrong number of features")
    if g.n != cf.n_train:
        raise DataError("scores do not match the forest's training set")
    if cf.num_trees == 0:
        raise NumericError("cannot estimate from an empty forest")
    gamma = np.ascontiguousarray(g.gamma, dtype=np.float64)
    roots, feature, threshold, left, right, _value, e_start, e_end, est_ids = cf.flat()
    nq = x.shape[0]
    points = np.empty(nq, dtype=np.float64)
    ses = np.empty(nq, dtype=np.float64)
    n_threads = _resolve_threads(threads)
    if n_threads == 1 or nq < 64:
        _kernels.cate_batch(x, roots, feature, threshold, left, right,
                            e_start, e_end, est_ids, gamma, points, ses)
        return points, ses
    from concurrent.futures import ThreadPoolExecutor
    chunks = np.array_split(np.arange(nq), n_threads)

    def run(idx):
        _kernels.cate_batch(x[idx], roots, feature, threshold, left, right,
                            e_start, e_end, est_ids, gamma,
                            points[idx[0]:idx[-1] + 1], ses[idx[0]:idx[-1] + 1])

    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        list(pool.map(run, [c for c in chunks if c.size]))
    return points, ses


def estimate_cate(cf: CausalForest, g: DrScores, x_row) -> CateEstimate:
    """Effect estimate at a single query row."""
    x_row = np.ascontiguousarray(x_row, dtype=np.float64).reshape(1, -1)
    points, ses = estimate_cate_batch(cf, g, x_row)
    return CateEstimate(point=float(points[0]), se=float(ses[0]))


def estimate_ate(g: DrScores) -> AteEstimate:
    """Average effect: mean score with the usual sd/sqrt(n) standard error."""
    gamma = np.asarray(g.gamma, dtype=np.float64)
    if gamma.size == 0:
        raise DataError("cannot average an empty score vector")
    point = float(gamma.mean())
    se = float(np.std(gamma, ddof=1) / np.sqrt(gamma.size)) if gamma.size > 1 else 0.0
    return AteEstimate(point=point, se=se)


@dataclass
class PipelineResult:
    """Everything one full estimation run produces."""

    centered: CenteredData
    forest: CausalForest
    scores: DrScores
    tau_oob: np.ndarray
    ate: AteEstimate


def run_pipeline(d: Dataset, nuisance_params: ForestParams,
                 causal_params: ForestParams, score_formula: str = "paper",
                 clamp: Tuple[float, float] = DEFAULT_CLAMP,
                 threads: Optional[int] = None) -> PipelineResult:
    """Centering, effect forest, scores, and the average effect in one call.

    The effect forest's out-of-bag predictions feed the continuous-treatment
    score; the forest is fitted once and not re-grown afterwards.
    """
    c = local_center(d, nuisance_params, clamp=clamp, threads=threads)
    cf = fit_causal_forest(d, c, causal_params, threads=threads)
    tau_oob = predict_oob(cf, d.x).values
    if d.treatment_is_binary:
        g = dr_scores(d, c, formula=score_formula)
    else:
        g = dr_scores(d, c, tau_hat_oob=tau_oob)
    return PipelineResult(centered=c, forest=cf, scores=g, tau_oob=tau_oob,
                          ate=estimate_ate(g))
