"""Synthetic data generators with known ground truth."""

import numpy as np
import pytest

from glassforest import DataError, DgpSpec, confounded_preset, generate, oracle_cate, write_truth
from helpers import naive_diff


class TestGenerate:
    def test_constant_effect_noiseless_outcome_identity(self):
        """With zero noise and zero baseline, y is exactly w * tau."""
        spec = DgpSpec(n=200, p=3, effect="constant", effect_params={"value": 1.0},
                       noise_sd=0.0, seed=5)
        d, tau, true_ate = generate(spec)
        assert true_ate == 1.0
        assert np.array_equal(tau, np.ones(200))
        assert np.array_equal(d.y, d.w * tau)

    def test_same_seed_reproduces(self):
        spec = DgpSpec(n=100, p=4, seed=21)
        d1, tau1, _ = generate(spec)
        d2, tau2, _ = generate(spec)
        assert np.array_equal(d1.x, d2.x)
        assert np.array_equal(d1.w, d2.w)
        assert np.array_equal(d1.y, d2.y)
        assert np.array_equal(tau1, tau2)

    def test_different_seed_differs(self):
        d1, _, _ = generate(DgpSpec(n=100, p=2, seed=1))
        d2, _, _ = generate(DgpSpec(n=100, p=2, seed=2))
        assert not np.array_equal(d1.x, d2.x)

    def test_treated_fraction_tracks_propensity(self):
        spec = DgpSpec(n=2000, p=2, propensity="constant",
                       propensity_params={"value": 0.3}, seed=8)
        d, _, _ = generate(spec)
        sd = np.sqrt(0.3 * 0.7 / 2000)
        assert abs(d.w.mean() - 0.3) < 3 * sd

    def test_feature_names_and_mask(self):
        d, _, _ = generate(DgpSpec(n=10, p=3, seed=0))
        assert d.feature_names == ["x1", "x2", "x3"]
        assert not d.missing_mask.any()
        assert d.treatment_is_binary

    def test_continuous_treatment_support(self):
        """Continuous w is e(x) plus bounded uniform noise, never binary."""
        spec = DgpSpec(n=500, p=2, treatment="continuous",
                       propensity="constant", propensity_params={"value": 0.5},
                       noise_half_width=0.25, seed=3)
        d, _, _ = generate(spec)
        assert not d.treatment_is_binary
        assert d.w.min() >= 0.25 - 1e-12
        assert d.w.max() <= 0.75 + 1e-12

    def test_binary_propensity_bounds_enforced(self):
        with pytest.raises(DataError, match="propensity range"):
            DgpSpec(n=50, p=2, propensity="linear",
                    propensity_params={"intercept": 0.25, "slope": 0.9})

    def test_continuous_treatment_skips_propensity_bounds(self):
        spec = DgpSpec(n=50, p=2, treatment="continuous", propensity="linear",
                       propensity_params={"intercept": 0.25, "slope": 0.9})
        d, _, _ = generate(spec)
        assert d.n == 50

    def test_interaction_needs_two_features(self):
        with pytest.raises(DataError, match="at least two features"):
            DgpSpec(n=50, p=1, effect="interaction")

    def test_step_true_ate_matches_indicator_mean(self):
        spec = DgpSpec(n=400, p=2, effect="step",
                       effect_params={"height": 2.0, "threshold": 0.5}, seed=6)
        d, tau, true_ate = generate(spec)
        assert true_ate == tau.mean()
        assert set(np.unique(tau)) <= {0.0, 2.0}


class TestOracleCate:
    def test_linear(self):
        spec = DgpSpec(n=10, p=2, effect="linear",
                       effect_params={"intercept": 0.5, "slope": 2.0})
        x = np.array([[0.25, 0.9], [0.75, 0.1]])
        assert np.allclose(oracle_cate(spec, x), [1.0, 2.0])

    def test_step(self):
        spec = DgpSpec(n=10, p=1, effect="step",
                       effect_params={"height": 2.0, "threshold": 0.5})
        x = np.array([[0.7], [0.5], [0.2]])
        assert np.array_equal(oracle_cate(spec, x), [2.0, 0.0, 0.0])

    def test_interaction(self):
        spec = DgpSpec(n=10, p=2, effect="interaction", effect_params={"scale": 3.0})
        x = np.array([[0.5, 0.4]])
        assert np.allclose(oracle_cate(spec, x), [0.6])

    def test_constant(self):
        spec = DgpSpec(n=10, p=1, effect="constant", effect_params={"value": 7.0})
        assert np.array_equal(oracle_cate(spec, np.zeros((3, 1))), [7.0, 7.0, 7.0])


class TestConfoundedPreset:
    def test_true_ate_exactly_one(self):
        d, tau, true_ate = generate(confounded_preset(n=500, seed=2))
        assert true_ate == 1.0
        assert np.array_equal(tau, np.ones(500))

    def test_naive_difference_is_badly_biased(self):
        """Selection on x1 drags the unadjusted difference far above 1."""
        d, _, true_ate = generate(confounded_preset(n=2000, seed=3))
        assert naive_diff(d) - true_ate > 0.3

    def test_propensity_inside_legal_range(self):
        spec = confounded_preset(n=100, seed=0)
        lo = spec.propensity_params["intercept"]
        hi = lo + spec.propensity_params["slope"]
        assert 0.05 <= lo < hi <= 0.95


class TestWriteTruth:
    def test_file_round_trips(self, tmp_path):
        tau = np.array([0.5, 1.0, -2.25])
        path = tmp_path / "truth.csv"
        write_truth(str(path), tau)
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "row,tau_true"
        got = np.array([float(line.split(",")[1]) for line in lines[1:]])
        assert np.array_equal(got, tau)
