"""Synthetic data generators with known ground truth.

Features are iid U[0,1]^p. Treatment is Bernoulli(e(x)) or e(x) plus
uniform noise. Outcomes follow y = m(x) + w * tau(x) + N(0, sd). The
generator returns the per-unit true effects alongside the dataset so
recovery can be scored exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .data import Dataset, format_value
from .errors import DataError

PROPENSITY_BOUNDS = (0.05, 0.95)


@dataclass
class DgpSpec:
    """Recipe for one synthetic dataset.

    propensity: 'constant' {value} or 'linear' {intercept, slope} in x1.
    baseline:   'zero', 'constant' {value}, or 'linear' {intercept, slope} in x1.
    effect:     'constant' {value}, 'linear' {intercept, slope} in x1,
                'step' {height, threshold} on x1, or
                'interaction' {scale} acting on x1 * x2.
    treatment:  'binary' or 'continuous'; continuous adds U[-hw, hw] noise
                around e(x) with hw = noise_half_width.
    """

    n: int
    p: int
    propensity: str = "constant"
    propensity_params: Dict[str, float] = field(default_factory=lambda: {"value": 0.5})
    baseline: str = "zero"
    baseline_params: Dict[str, float] = field(default_factory=dict)
    effect: str = "constant"
    effect_params: Dict[str, float] = field(default_factory=lambda: {"value": 1.0})
    treatment: str = "binary"
    noise_sd: float = 1.0
    noise_half_width: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise DataError("n and p must be positive")
        if self.treatment not in ("binary", "continuous"):
            raise DataError(f"unknown treatment type {self.treatment!r}")
        if self.effect == "interaction" and self.p < 2:
            raise DataError("interaction effects need at least two features")
        if self.noise_sd < 0:
            raise DataError("noise_sd must be non-negative")
        if self.treatment == "binary":
            lo, hi = _propensity_range(self.propensity, self.propensity_params)
            if lo < PROPENSITY_BOUNDS[0] or hi > PROPENSITY_BOUNDS[1]:
                raise DataError(
                    f"binary propensity range [{lo:g}, {hi:g}] must stay inside "
                    f"[{PROPENSITY_BOUNDS[0]}, {PROPENSITY_BOUNDS[1]}]")


def _propensity_range(kind: str, params: Dict[str, float]) -> Tuple[float, float]:
    if kind == "constant":
        v = params["value"]
        return v, v
    if kind == "linear":
        a = params.get("intercept", 0.0)
        b = params.get("slope", 0.0)
        return min(a, a + b), max(a, a + b)
    raise DataError(f"unknown propensity family {kind!r}")


def propensity_values(spec: DgpSpec, x: np.ndarray) -> np.ndarray:
    if spec.propensity == "constant":
        return np.full(x.shape[0], spec.propensity_params["value"])
    if spec.propensity == "linear":
        a = spec.propensity_params.get("intercept", 0.0)
        b = spec.propensity_params.get("slope", 0.0)
        return a + b * x[:, 0]
    raise DataError(f"unknown propensity family {spec.propensity!r}")


def baseline_values(spec: DgpSpec, x: np.ndarray) -> np.ndarray:
    if spec.baseline == "zero":
        return np.zeros(x.shape[0])
    if spec.baseline == "constant":
        return np.full(x.shape[0], spec.baseline_params["value"])
    if spec.baseline == "linear":
        a = spec.baseline_params.get("intercept", 0.0)
        b = spec.baseline_params.get("slope", 0.0)
        return a + b * x[:, 0]
    raise DataError(f"unknown baseline family {spec.baseline!r}")


def oracle_cate(spec: DgpSpec, x: np.ndarray) -> np.ndarray:
    """True tau(x) for arbitrary feature rows."""
    if spec.effect == "constant":
        return np.full(x.shape[0], spec.effect_params["value"])
    if spec.effect == "linear":
        a = spec.effect_params.get("intercept", 0.0)
        b = spec.effect_params.get("slope", 0.0)
        return a + b * x[:, 0]
    if spec.effect == "step":
        h = spec.effect_params.get("height", 2.0)
        s = spec.effect_params.get("threshold", 0.5)
        return h * (x[:, 0] > s).astype(np.float64)
    if spec.effect == "interaction":
        c = spec.effect_params.get("scale", 1.0)
        return c * x[:, 0] * x[:, 1]
    raise DataError(f"unknown effect family {spec.effect!r}")


def generate(spec: DgpSpec) -> Tuple[Dataset, np.ndarray, float]:
    """Draw one dataset; returns (dataset, per-unit true tau, true ATE)."""
    rng = np.random.default_rng(spec.seed)
    x = rng.random((spec.n, spec.p))
    e = propensity_values(spec, x)
    if spec.treatment == "binary":
        w = (rng.random(spec.n) < e).astype(np.float64)
    else:
        w = e + rng.uniform(-spec.noise_half_width, spec.noise_half_width, spec.n)
    tau = oracle_cate(spec, x)
    y = baseline_values(spec, x) + w * tau + rng.normal(0.0, spec.noise_sd, spec.n)
    names = [f"x{j + 1}" for j in range(spec.p)]
    d = Dataset(x=x, w=w, y=y, feature_names=names,
                missing_mask=np.zeros((spec.n, spec.p), dtype=bool))
    d.validate()
    return d, tau, float(tau.mean())


def confounded_preset(n: int, seed: int, noise_sd: float = 1.0, p: int = 5) -> DgpSpec:
    """Selection on x1 with a strong baseline trend and constant unit effect.

    e(x) = 0.25 + 0.5 * x1 and m(x) = 5 * x1, so naive group means are badly
    biased while the true ATE is exactly 1.
    """
    return DgpSpec(
        n=n, p=p,
        propensity="linear", propensity_params={"intercept": 0.25, "slope": 0.5},
        baseline="linear", baseline_params={"intercept": 0.0, "slope": 5.0},
        effect="constant", effect_params={"value": 1.0},
        treatment="binary", noise_sd=noise_sd, seed=seed)


def write_truth(path: str, tau: np.ndarray) -> None:
    """Persist per-unit true effects next to a generated dataset."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "tau_true"])
        for i, t in enumerate(tau):
            writer.writerow([i, format_value(t)])
