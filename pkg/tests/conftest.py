"""Shared fixtures.

The medium step-effect fit is the workhorse: one dataset and one full
pipeline run shared (read-only) by the explanation, distillation, and
diagnostics tests so each module's suite does not pay for its own forests.
"""

import numpy as np
import pytest

from glassforest import DgpSpec, ForestParams, dr_scores, generate, run_pipeline


@pytest.fixture(scope="session")
def step_case():
    """Step heterogeneity on x1, randomized treatment, mild noise."""
    spec = DgpSpec(n=600, p=5,
                   effect="step", effect_params={"height": 2.0, "threshold": 0.5},
                   noise_sd=0.5, seed=11)
    d, tau, true_ate = generate(spec)
    return {"d": d, "tau": tau, "true_ate": true_ate, "spec": spec}


@pytest.fixture(scope="session")
def step_fit(step_case):
    """One full pipeline run on the step dataset, plus both score variants."""
    d = step_case["d"]
    nuisance = ForestParams(num_trees=80, seed=3)
    causal = ForestParams(num_trees=120, seed=7)
    res = run_pipeline(d, nuisance, causal, score_formula="aipw")
    return {
        "d": d,
        "tau": step_case["tau"],
        "spec": step_case["spec"],
        "nuisance": nuisance,
        "causal": causal,
        "centered": res.centered,
        "forest": res.forest,
        "scores": res.scores,
        "scores_paper": dr_scores(d, res.centered, formula="paper"),
        "tau_oob": res.tau_oob,
        "ate": res.ate,
    }
