"""Release gate: the quantitative targets the toolkit must hit.

Every test prints one `criterion NN (<name>): PASS|FAIL` line before its
assertions, so `pytest -rA tests/test_acceptance.py` reads as a checklist.

Criterion 01b is expected to stay red. The two binary score formulas agree
on treated units when the control-arm model is zero, but on control units
they differ by exactly m1_hat / (1 - e_hat); the elementwise identity it
asserts is therefore unattainable whenever the treated-arm model is
nonzero. The check is kept as stated rather than weakened; the assertion
message carries the analysis.
"""

import hashlib

import numpy as np

from glassforest import (CenteredData, Dataset, DgpSpec, DrScores, ForestParams,
                         blp, confounded_preset, dr_scores, estimate_cate_batch,
                         generate, impute_median, local_center, oracle_cate,
                         placebo_treatment, r_loss, rashomon_curve,
                         representative_tree, run_pipeline, select_background,
                         shap_exact, shap_sampled, tree_predict,
                         variable_importance)
from glassforest.cli import main as cli_main
from helpers import naive_diff

STEP = {"effect": "step", "effect_params": {"height": 2.0, "threshold": 0.5}}


def verdict(num: str, name: str, ok: bool) -> bool:
    print(f"criterion {num} ({name}): {'PASS' if ok else 'FAIL'}")
    return ok


def dataset_for(w, y, x=None) -> Dataset:
    w = np.asarray(w, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x is None:
        x = np.zeros((w.size, 1))
    x = np.asarray(x, dtype=np.float64)
    names = [f"x{j + 1}" for j in range(x.shape[1])]
    return Dataset(x=x, w=w, y=y, feature_names=names,
                   missing_mask=np.zeros(x.shape, dtype=bool))


def centered_for(w, y, e, m1, m0) -> CenteredData:
    w = np.asarray(w, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    m1 = np.asarray(m1, dtype=np.float64)
    m0 = np.asarray(m0, dtype=np.float64)
    m = np.where(w > 0, m1, m0)
    return CenteredData(y_tilde=y - m, w_tilde=w - e, e_hat=e, m_hat=m,
                        m_hat_1=m1, m_hat_0=m0, e_hat_raw=e.copy(),
                        treatment_is_binary=True, n_clamped=0,
                        clamp=(0.02, 0.98), n_oob_backfilled=0)


def test_criterion_01a_score_formula_plugins():
    w = [1.0, 0.0, 1.0]
    y = [2.0, 2.0, 1.0]
    e = [0.5, 0.5, 0.5]
    m1 = [0.0, 1.0, 1.0]
    m0 = [0.0, 1.0, 0.0]
    g = dr_scores(dataset_for(w, y), centered_for(w, y, e, m1, m0),
                  formula="paper")
    ok = g.gamma.tolist() == [4.0, -4.0, 1.0]
    assert verdict("01a", "score formula plug-in cases", ok), \
        f"expected [4, -4, 1], got {g.gamma.tolist()}"


def test_criterion_01b_formulas_agree_when_control_model_zero():
    rng = np.random.default_rng(0)
    n = 400
    w = (rng.random(n) < 0.5).astype(np.float64)
    y = rng.normal(size=n)
    e = rng.uniform(0.2, 0.8, size=n)
    m1 = rng.normal(size=n)
    m0 = np.zeros(n)
    d = dataset_for(w, y)
    c = centered_for(w, y, e, m1, m0)
    gap = np.abs(dr_scores(d, c, formula="paper").gamma
                 - dr_scores(d, c, formula="aipw").gamma)
    ok = float(gap.max()) <= 1e-12
    assert verdict("01b", "formulas coincide when m0_hat = 0", ok), (
        "the formulas agree on every treated unit here, but on control units "
        "the default formula adds back m1_hat / (1 - e_hat) "
        f"(max gap {gap.max():.6g}, always on w = 0 rows: "
        f"{bool(np.all(w[gap > 1e-12] == 0.0))}); with m0_hat = 0 the "
        "elementwise identity can only hold where m1_hat is also zero, so "
        "this criterion is unattainable as stated and is left red on purpose"
    )


def test_criterion_02_debiasing_on_confounded_preset():
    nuisance = ForestParams(num_trees=150, seed=2)
    causal = ForestParams(num_trees=150, seed=3)
    hits = 0
    biases = []
    for s in range(100):
        d, _, _ = generate(confounded_preset(n=800, seed=2000 + s))
        biases.append(naive_diff(d) - 1.0)
        res = run_pipeline(d, nuisance, causal, score_formula="aipw")
        hits += abs(res.ate.point - 1.0) < 3.0 * res.ate.se
    median_bias = float(np.median(biases))
    ok = median_bias > 0.3 and hits >= 95
    assert verdict("02", "confounding removed", ok), \
        f"median naive bias {median_bias:.3f}, ATE within 3 SE in {hits}/100 seeds"


def test_criterion_03_cate_recovery_on_step_dgp():
    def rmse_for(n, nuis_trees, caus_trees, seed):
        spec = DgpSpec(n=n, p=5, noise_sd=0.5, seed=seed, **STEP)
        d, _, _ = generate(spec)
        res = run_pipeline(d, ForestParams(num_trees=nuis_trees, seed=31),
                           ForestParams(num_trees=caus_trees, seed=37),
                           score_formula="aipw")
        xq = np.random.default_rng(seed + 9000).random((800, 5))
        points, _ = estimate_cate_batch(res.forest, res.scores, xq)
        return float(np.sqrt(np.mean((points - oracle_cate(spec, xq)) ** 2)))

    big = [rmse_for(2000, 250, 2000, 3000 + s) for s in range(10)]
    small = [rmse_for(500, 100, 100, 3000 + s) for s in range(10)]
    med_big = float(np.median(big))
    med_small = float(np.median(small))
    ok = med_big < 0.25 and med_big < med_small
    assert verdict("03", "held-out effect recovery", ok), \
        f"median RMSE {med_big:.3f} at n=2000/2000 trees, {med_small:.3f} at n=500/100"


def test_criterion_04_shapley_axioms():
    spec = DgpSpec(n=400, p=6, effect="linear",
                   effect_params={"intercept": 0.5, "slope": 2.0},
                   noise_sd=0.5, seed=41)
    d, _, _ = generate(spec)
    res = run_pipeline(d, ForestParams(num_trees=60, seed=5),
                       ForestParams(num_trees=80, seed=6), score_formula="aipw")
    bg = select_background(d.x, max_rows=120, seed=0)
    worst_eff = 0.0
    worst_gap = 0.0
    for r in (0, 7, 19, 101, 350):
        exact = shap_exact(res.forest, res.scores, d.x[r], bg)
        worst_eff = max(worst_eff, abs(exact.contributions.sum()
                                       - (exact.prediction - exact.base_value)))
        sampled = shap_sampled(res.forest, res.scores, d.x[r], bg,
                               n_permutations=2000, seed=7)
        worst_gap = max(worst_gap, float(np.max(
            np.abs(sampled.contributions - exact.contributions))))
    ok = worst_eff <= 1e-8 and worst_gap <= 0.05
    assert verdict("04", "Shapley efficiency and sampling accuracy", ok), \
        f"worst efficiency residual {worst_eff:.2e}, worst sampled gap {worst_gap:.4f}"


def test_criterion_05_importance_ranking():
    firsts = 0
    worst_sum_err = 0.0
    for s in range(20):
        spec = DgpSpec(n=600, p=10, noise_sd=0.5, seed=5000 + s, **STEP)
        d, _, _ = generate(spec)
        res = run_pipeline(d, ForestParams(num_trees=60, seed=8),
                           ForestParams(num_trees=100, seed=9),
                           score_formula="aipw")
        table = variable_importance(res.forest, d.feature_names)
        worst_sum_err = max(worst_sum_err, abs(float(table.importance.sum()) - 1.0))
        firsts += table.features[0] == "x1"

    spec = DgpSpec(n=400, p=4, noise_sd=0.5, seed=77, **STEP)
    d, _, _ = generate(spec)
    x = np.hstack([d.x, np.full((d.n, 1), 0.5)])
    flat = Dataset(x=x, w=d.w, y=d.y, feature_names=d.feature_names + ["flat"],
                   missing_mask=np.zeros(x.shape, dtype=bool))
    res = run_pipeline(flat, ForestParams(num_trees=40, seed=10, mtry=5),
                       ForestParams(num_trees=40, seed=11, mtry=5),
                       score_formula="aipw")
    table = variable_importance(res.forest, flat.feature_names)
    flat_importance = dict(zip(table.features, table.importance))["flat"]

    ok = worst_sum_err <= 1e-9 and firsts >= 19 and flat_importance == 0.0
    assert verdict("05", "importance normalization and driver ranking", ok), (
        f"sum error {worst_sum_err:.2e}, driver first in {firsts}/20 seeds, "
        f"constant-column importance {flat_importance!r}")


def test_criterion_06_rashomon_pattern():
    sizes = [1, 10, 100, 1000]
    wins = 0
    bad_curves = []
    for s in range(20):
        spec = DgpSpec(n=800, p=5, noise_sd=0.5, seed=6000 + s, **STEP)
        d, _, _ = generate(spec)
        c = local_center(d, ForestParams(num_trees=100, seed=12))
        curve = rashomon_curve(d, c, ForestParams(num_trees=100, seed=13),
                               sizes, 2000, d.x, score_formula="aipw")
        rel = {p.label: p.relative_r_loss for p in curve.points}
        path = [rel[str(k)] for k in sizes]
        tol = 0.01 * abs(curve.baseline_r_loss)
        ups = [path[i + 1] - path[i] for i in range(len(path) - 1)
               if path[i + 1] > path[i]]
        if len(ups) > 1 or any(u > tol for u in ups):
            bad_curves.append((s, path))
        wins += rel["distilled"] < rel["1"]
    ok = not bad_curves and wins >= 18
    assert verdict("06", "loss falls with ensemble size, distilled beats single", ok), \
        f"monotonicity broken on {bad_curves}; distilled won {wins}/20 seeds"


def test_criterion_07_representative_tree_is_exact_argmin():
    spec = DgpSpec(n=500, p=5, noise_sd=0.5, seed=71, **STEP)
    d, _, _ = generate(spec)
    res = run_pipeline(d, ForestParams(num_trees=60, seed=14),
                       ForestParams(num_trees=200, seed=15),
                       score_formula="aipw")
    c = res.centered
    rep = representative_tree(res.forest, d.x, c)
    losses = [r_loss(tree_predict(t, d.x), c.y_tilde, c.w_tilde)
              for t in res.forest.trees]
    ok = rep.loss == min(losses) and rep.index == int(np.argmin(losses))
    assert verdict("07", "representative tree minimizes member loss", ok), \
        f"picked index {rep.index} at {rep.loss}, true min {min(losses)}"


def test_criterion_08_blp_recovery_coverage_orthogonality():
    rng = np.random.default_rng(81)
    x = rng.random((200, 3))
    g = DrScores(gamma=2.0 + 3.0 * x[:, 0], formula_tag="aipw")
    coef = {r.name: r.coef for r in blp(g, x, ["x1", "x2", "x3"]).rows}
    exact_ok = (abs(coef["intercept"] - 2.0) <= 1e-8
                and abs(coef["x1"] - 3.0) <= 1e-8
                and abs(coef["x2"]) <= 1e-8 and abs(coef["x3"]) <= 1e-8)

    hits = 0
    orth_ratio = None
    for s in range(100):
        spec = DgpSpec(n=600, p=3, effect="linear",
                       effect_params={"intercept": 0.5, "slope": 2.0},
                       noise_sd=0.5, seed=8000 + s)
        d, _, _ = generate(spec)
        res = run_pipeline(d, ForestParams(num_trees=60, seed=16),
                           ForestParams(num_trees=60, seed=17),
                           score_formula="aipw")
        result = blp(res.scores, d.x, d.feature_names)
        rows = {r.name: r for r in result.rows}
        hits += abs(rows["x1"].coef - 2.0) <= 1.96 * rows["x1"].se
        if s == 0:
            design = np.column_stack([np.ones(d.n), d.x])
            beta = np.array([rows["intercept"].coef, rows["x1"].coef,
                             rows["x2"].coef, rows["x3"].coef])
            resid = res.scores.gamma - design @ beta
            num = np.abs(design.T @ resid)
            den = np.abs(design).T @ np.abs(resid) + 1e-30
            orth_ratio = float((num / den).max())

    cover_ok = 90 <= hits <= 99
    orth_ok = orth_ratio <= 1e-6
    ok = exact_ok and cover_ok and orth_ok
    assert verdict("08", "linear projection recovery and calibration", ok), (
        f"exact recovery {exact_ok}, CI covered true slope in {hits}/100 seeds, "
        f"orthogonality ratio {orth_ratio:.2e}")


def test_criterion_09_refutation_pattern():
    nuisance = ForestParams(num_trees=60, seed=18)
    causal = ForestParams(num_trees=60, seed=19)
    hits = 0
    for s in range(50):
        d, _, _ = generate(confounded_preset(n=500, seed=9000 + s))
        r = placebo_treatment(d, nuisance, causal, seed=s)
        hits += abs(r.ate.point) < 2.0 * r.ate.se
    rate_ok = hits >= 43

    d, _, _ = generate(confounded_preset(n=500, seed=90))
    base = run_pipeline(d, nuisance, causal)
    ident = placebo_treatment(d, nuisance, causal,
                              permutation=np.arange(d.n, dtype=np.int64))
    ident_ok = (ident.ate.point == base.ate.point
                and ident.ate.se == base.ate.se)

    total = sum(b.count * b.mean_score for b in ident.profile if b.count)
    prof_err = abs(total / d.n - ident.ate.point)
    prof_ok = prof_err <= 1e-9

    ok = rate_ok and ident_ok and prof_ok
    assert verdict("09", "placebo centers on zero, identity run exact", ok), (
        f"|ATE| < 2 SE in {hits}/50 shuffles, identity bit-exact {ident_ok}, "
        f"profile recombination error {prof_err:.2e}")


def test_criterion_10_thread_count_determinism(tmp_path):
    data = tmp_path / "data"
    code = cli_main(["synth", "--preset", "confounded", "--n", "300",
                     "--seed", "4", "--out", str(data)])
    assert code == 0
    digests = []
    for threads in ("1", "4"):
        out = tmp_path / f"run_t{threads}"
        assert cli_main(["fit", "--input", str(data / "data.csv"),
                         "--out", str(out), "--trees", "60", "--seed", "9",
                         "--threads", threads]) == 0
        est = tmp_path / f"est_t{threads}"
        assert cli_main(["estimate", "--input", str(out), "--out", str(est),
                         "--threads", threads]) == 0
        h = hashlib.sha256()
        for name in ("train.csv", "centered.csv", "scores.csv",
                     "tau_oob.csv", "ate.csv"):
            h.update((out / name).read_bytes())
        h.update((est / "cate.csv").read_bytes())
        digests.append(h.hexdigest())
    ok = digests[0] == digests[1]
    assert verdict("10", "output CSVs independent of thread count", ok), \
        f"digests differ: {digests}"


def test_criterion_11_median_imputation():
    x = np.array([[1.0], [2.0], [np.nan], [4.0]])
    d = Dataset(x=x, w=np.array([0.0, 1.0, 0.0, 1.0]),
                y=np.zeros(4), feature_names=["x1"],
                missing_mask=np.isnan(x))
    filled = impute_median(d)
    case_ok = filled.x[:, 0].tolist() == [1.0, 2.0, 2.0, 4.0]
    again = impute_median(filled)
    idem_ok = (np.array_equal(again.x, filled.x)
               and np.array_equal(again.missing_mask, filled.missing_mask))
    ok = case_ok and idem_ok
    assert verdict("11", "median imputation exact and idempotent", ok), \
        f"filled column {filled.x[:, 0].tolist()}, idempotent {idem_ok}"
