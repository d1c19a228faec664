"""Refutation tests and overlap checks.

A healthy estimate should vanish when the treatment is shuffled, vanish when
the outcome is shuffled, and rest on propensities that stay away from 0 and
1. These checks re-run the entire pipeline on perturbed data, never a
shortcut version of it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .causal import (AteEstimate, CenteredData, DEFAULT_CLAMP, run_pipeline)
from .data import Dataset
from .errors import DataError
from .forest import ForestParams


@dataclass
class ProfileBin:
    """Mean doubly robust score within one decile of the unshuffled variable."""

    label: str
    lo: float
    hi: float
    count: int
    mean_score: float


@dataclass
class RefutationResult:
    test: str
    ate: AteEstimate
    profile: List[ProfileBin]
    n: int
    seed: Optional[int]


def _decile_bins(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    edges = np.quantile(values, np.arange(1, 10) / 10.0)
    idx = np.searchsorted(edges, values, side="left")
    return idx, edges


def _profile(values: np.ndarray, gamma: np.ndarray) -> List[ProfileBin]:
    idx, edges = _decile_bins(values)
    lo_all = float(values.min())
    hi_all = float(values.max())
    bounds = np.concatenate(([lo_all], edges, [hi_all]))
    bins = []
    for b in range(10):
        sel = idx == b
        count = int(sel.sum())
        mean = float(gamma[sel].mean()) if count else float("nan")
        bins.append(ProfileBin(label=f"d{b + 1}", lo=float(bounds[b]),
                               hi=float(bounds[b + 1]), count=count, mean_score=mean))
    return bins


def placebo_treatment(d: Dataset, nuisance_params: ForestParams,
                      causal_params: ForestParams, seed: int = 0,
                      score_formula: str = "paper",
                      clamp: Tuple[float, float] = DEFAULT_CLAMP,
                      threads: Optional[int] = None,
                      permutation: Optional[np.ndarray] = None) -> RefutationResult:
    """Shuffle the treatment column and re-run the full pipeline.

    The permutation is drawn from `seed` unless given explicitly (the
    identity permutation reproduces the unshuffled run). The profile bins
    the resulting scores by deciles of the ACTUAL, unshuffled treatment.
    """
    if permutation is None:
        permutation = np.random.default_rng(seed).permutation(d.n)
    else:
        permutation = np.asarray(permutation, dtype=np.int64)
        if sorted(permutation.tolist()) != list(range(d.n)):
            raise DataError("permutation must rearrange all row indices exactly once")
    shuffled = replace(d, w=d.w[permutation])
    result = run_pipeline(shuffled, nuisance_params, causal_params,
                          score_formula=score_formula, clamp=clamp, threads=threads)
    return RefutationResult(test="placebo_treatment", ate=result.ate,
                            profile=_profile(d.w, result.scores.gamma),
                            n=d.n, seed=seed)


def dummy_outcome(d: Dataset, nuisance_params: ForestParams,
                  causal_params: ForestParams, seed: int = 0,
                  score_formula: str = "paper",
                  clamp: Tuple[float, float] = DEFAULT_CLAMP,
                  threads: Optional[int] = None,
                  permutation: Optional[np.ndarray] = None) -> RefutationResult:
    """Shuffle the outcome column and re-run the full pipeline.

    The profile bins the resulting scores by deciles of the ACTUAL,
    unshuffled outcome.
    """
    if permutation is None:
        permutation = np.random.default_rng(seed).permutation(d.n)
    else:
        permutation = np.asarray(permutation, dtype=np.int64)
        if sorted(permutation.tolist()) != list(range(d.n)):
            raise DataError("permutation must rearrange all row indices exactly once")
    shuffled = replace(d, y=d.y[permutation])
    result = run_pipeline(shuffled, nuisance_params, causal_params,
                          score_formula=score_formula, clamp=clamp, threads=threads)
    return RefutationResult(test="dummy_outcome", ate=result.ate,
                            profile=_profile(d.y, result.scores.gamma),
                            n=d.n, seed=seed)


@dataclass
class OverlapReport:
    """Propensity health for binary treatment; residual spread otherwise.

    For binary treatment: min/max/deciles of the raw propensity estimates, a
    fixed-width histogram over [0, 1] in 0.05 steps, the clamped-unit count,
    and passed = (nothing was clamped). For continuous treatment the deciles
    describe the treatment residuals, the variance field is their second
    moment, and the histogram is empty.
    """

    treatment_is_binary: bool
    minimum: float
    maximum: float
    deciles: np.ndarray
    n_clamped: int
    clamp: Tuple[float, float]
    histogram: List[Tuple[float, float, int]]
    residual_variance: Optional[float]
    passed: bool

    def to_text(self) -> str:
        lines = []
        if self.treatment_is_binary:
            lines.append("overlap check (binary treatment, raw propensity estimates)")
            lines.append(f"min = {self.minimum:.4f}, max = {self.maximum:.4f}, "
                         f"clamped units = {self.n_clamped} "
                         f"(bounds [{self.clamp[0]:g}, {self.clamp[1]:g}])")
            lines.append("deciles: " + ", ".join(f"{v:.4f}" for v in self.deciles))
            lines.append(f"{'bin':<16}{'count':>8}")
            for lo, hi, cnt in self.histogram:
                lines.append(f"[{lo:.2f}, {hi:.2f})".ljust(16) + f"{cnt:>8}")
            lines.append("passed" if self.passed else "FAILED: propensities were clamped")
        else:
            lines.append("overlap check (continuous treatment, treatment residuals)")
            lines.append(f"residual variance = {self.residual_variance:.6g}")
            lines.append("residual deciles: " + ", ".join(f"{v:.4f}" for v in self.deciles))
            lines.append("passed (no propensity bounds apply)")
        return "\n".join(lines)


def overlap_check(c: CenteredData) -> OverlapReport:
    """Inspect estimated propensities (binary) or treatment residuals."""
    qs = np.arange(1, 10) / 10.0
    if c.treatment_is_binary:
        e = c.e_hat_raw
        edges = np.arange(0.0, 1.0001, 0.05)
        counts, _ = np.histogram(e, bins=edges)
        hist = [(float(edges[i]), float(edges[i + 1]), int(counts[i]))
                for i in range(len(counts))]
        return OverlapReport(treatment_is_binary=True,
                             minimum=float(e.min()), maximum=float(e.max()),
                             deciles=np.quantile(e, qs), n_clamped=c.n_clamped,
                             clamp=c.clamp, histogram=hist, residual_variance=None,
                             passed=c.n_clamped == 0)
    r = c.w_tilde
    return OverlapReport(treatment_is_binary=False,
                         minimum=float(r.min()), maximum=float(r.max()),
                         deciles=np.quantile(r, qs), n_clamped=0, clamp=c.clamp,
                         histogram=[], residual_variance=float(np.mean(r ** 2)),
                         passed=True)
