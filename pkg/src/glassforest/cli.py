"""Command line front end.

One executable, ten subcommands: `synth` makes data with known truth, `fit`
runs the full estimation pipeline into a run directory, and the rest read
that run directory to produce effect estimates, explanations, simplified
trees, trade-off curves, linear summaries, refutation checks, and a report.
Every subcommand writes a manifest.json recording resolved parameters,
input hashes, artifact names, and timings; numeric CSV cells use full
round-trip precision so identical runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, replace
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import _svg
from .causal import (CenteredData, DEFAULT_CLAMP, DrScores, dr_scores,
                     estimate_cate_batch, local_center, run_pipeline)
from .data import (Dataset, SchemaConfig, format_value, impute_median,
                   load_csv, parse_schema_file, summarize, write_csv)
from .diagnostics import dummy_outcome, overlap_check, placebo_treatment
from .errors import DataError, GlassforestError, NumericError, UsageError
from .forest import Forest, ForestParams, Tree, load_forest, save_forest
from .iai import (blp, distill_tree, rashomon_curve, representative_tree)
from .synth import DgpSpec, confounded_preset, generate, write_truth
from .xai import (aggregate_shap, select_background, shap_exact, shap_sampled,
                  variable_importance)

MANIFEST_NAME = "manifest.json"
CAUSAL_SEED_OFFSET = 1000

_PRESETS = {
    "confounded": None,  # built by confounded_preset()
    "step": dict(propensity="constant", propensity_params={"value": 0.5},
                 baseline="zero", baseline_params={},
                 effect="step", effect_params={"height": 1.0, "threshold": 0.5}),
    "linear": dict(propensity="constant", propensity_params={"value": 0.5},
                   baseline="zero", baseline_params={},
                   effect="linear", effect_params={"intercept": 0.5, "slope": 2.0}),
}


class _Parser(argparse.ArgumentParser):
    """argparse that reports problems as UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format_value(v)


def _write_table(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _read_table(path: str) -> Dict[str, List[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        cols: Dict[str, List[str]] = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                cols[name].append(cell)
    return cols


def _float_column(cols: Dict[str, List[str]], name: str, path: str) -> np.ndarray:
    if name not in cols:
        raise DataError(f"{path} has no column {name!r}")
    return np.array([float(v) for v in cols[name]], dtype=np.float64)


def _write_manifest(out_dir: str, subcommand: str, seed: Optional[int],
                    threads: Optional[int], parameters: dict,
                    input_paths: Sequence[str], artifacts: Sequence[str],
                    timings: Dict[str, float]) -> None:
    manifest = {
        "subcommand": subcommand,
        "created_utc": _utc_now(),
        "seed": seed,
        "threads": threads,
        "parameters": parameters,
        "input_hashes": {p: _sha256(p) for p in input_paths},
        "artifacts": sorted(artifacts),
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _parse_clamp(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"--clamp wants 'lo,hi', got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise UsageError(f"--clamp wants two numbers, got {text!r}") from None
    return lo, hi


def _parse_int_list(text: str, flag: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise UsageError(f"{flag} wants comma-separated integers, got {text!r}") from None
    if not values:
        raise UsageError(f"{flag} got an empty list")
    return values


def _forest_flags(sub) -> None:
    sub.add_argument("--trees", type=int, default=500, help="trees per forest")
    sub.add_argument("--min-leaf", type=int, default=5, help="minimum units per leaf")
    sub.add_argument("--subsample", type=float, default=0.5,
                     help="per-tree subsample fraction")
    sub.add_argument("--honesty", choices=["on", "off"], default="on",
                     help="grow trees on one half, fill leaves from the other")


def _run_file(run_dir: str, name: str) -> str:
    path = os.path.join(run_dir, name)
    if not os.path.exists(path):
        raise DataError(f"run directory {run_dir!r} is missing {name}; "
                        "run `glassforest fit` first")
    return path


def _load_run_manifest(run_dir: str) -> dict:
    path = _run_file(run_dir, MANIFEST_NAME)
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("subcommand") != "fit":
        raise DataError(f"{path} does not describe a fit run "
                        f"(subcommand = {manifest.get('subcommand')!r})")
    return manifest


def _load_run_dataset(run_dir: str) -> Dataset:
    schema = parse_schema_file(_run_file(run_dir, "schema.txt"))
    return load_csv(_run_file(run_dir, "train.csv"), schema)


def _load_run_scores(run_dir: str, manifest: dict) -> DrScores:
    cols = _read_table(_run_file(run_dir, "scores.csv"))
    gamma = _float_column(cols, "gamma", "scores.csv")
    return DrScores(gamma=gamma,
                    formula_tag=manifest["parameters"]["score_formula_tag"])


def _load_run_centered(run_dir: str, manifest: dict, d: Dataset) -> CenteredData:
    path = _run_file(run_dir, "centered.csv")
    cols = _read_table(path)
    binary = d.treatment_is_binary
    m1 = _float_column(cols, "m_hat_1", path) if binary else None
    m0 = _float_column(cols, "m_hat_0", path) if binary else None
    params = manifest["parameters"]
    return CenteredData(
        y_tilde=_float_column(cols, "y_tilde", path),
        w_tilde=_float_column(cols, "w_tilde", path),
        e_hat=_float_column(cols, "e_hat", path),
        m_hat=_float_column(cols, "m_hat", path),
        m_hat_1=m1, m_hat_0=m0,
        e_hat_raw=_float_column(cols, "e_hat_raw", path),
        treatment_is_binary=binary,
        n_clamped=int(params["n_clamped"]),
        clamp=tuple(params["clamp"]),
        n_oob_backfilled=int(params["n_oob_backfilled"]),
    )


def _load_run_forest(run_dir: str) -> Forest:
    return load_forest(_run_file(run_dir, "forest.npz"))


def _default_out(args, run_dir: str, leaf: str) -> str:
    return args.out if args.out else os.path.join(run_dir, leaf)


# ---------------------------------------------------------------- synth


def _cmd_synth(args) -> int:
    t0 = time.perf_counter()
    if args.preset == "confounded":
        spec = confounded_preset(n=args.n, seed=args.seed, noise_sd=args.noise_sd,
                                 p=args.p)
        if args.treatment != "binary":
            raise UsageError("the confounded preset is a binary-treatment design")
    else:
        spec = DgpSpec(n=args.n, p=args.p, treatment=args.treatment,
                       noise_sd=args.noise_sd, seed=args.seed,
                       **_PRESETS[args.preset])
    d, tau, true_ate = generate(spec)
    out = _ensure_out(args.out)
    write_csv(d, os.path.join(out, "data.csv"))
    write_truth(os.path.join(out, "truth.csv"), tau)
    with open(os.path.join(out, "schema.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"treatment = {d.treatment_name}\n")
        fh.write(f"outcome = {d.outcome_name}\n")
        fh.write(f"features = {','.join(d.feature_names)}\n")
    _write_manifest(out, "synth", args.seed, None,
                    {"preset": args.preset, "dgp": asdict(spec),
                     "true_ate": true_ate},
                    [], ["data.csv", "truth.csv", "schema.txt"],
                    {"total": time.perf_counter() - t0})
    print(f"wrote {d.n} rows ({args.preset} preset, true ATE {true_ate:g}) to {out}")
    return 0


# ---------------------------------------------------------------- fit


def _cmd_fit(args) -> int:
    t0 = time.perf_counter()
    timings: Dict[str, float] = {}
    if args.schema:
        schema = parse_schema_file(args.schema)
    else:
        schema = SchemaConfig(treatment_column="w", outcome_column="y")
    d = load_csv(args.input, schema)
    if d.missing_mask.any():
        d = impute_median(d)
    timings["load"] = time.perf_counter() - t0

    nuisance = ForestParams(num_trees=args.trees, min_leaf_size=args.min_leaf,
                            subsample_ratio=args.subsample,
                            honesty=args.honesty == "on", seed=args.seed)
    causal = replace(nuisance, seed=args.seed + CAUSAL_SEED_OFFSET)
    clamp = _parse_clamp(args.clamp)
    t1 = time.perf_counter()
    result = run_pipeline(d, nuisance, causal, score_formula=args.score_formula,
                          clamp=clamp, threads=args.threads)
    timings["pipeline"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    out = _ensure_out(args.out)
    write_csv(d, os.path.join(out, "train.csv"))
    with open(os.path.join(out, "schema.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"treatment = {d.treatment_name}\n")
        fh.write(f"outcome = {d.outcome_name}\n")
        fh.write(f"features = {','.join(d.feature_names)}\n")
        if d.nuisance_feature_idx is not None:
            names = [d.feature_names[j] for j in d.nuisance_feature_idx]
            fh.write(f"nuisance_features = {','.join(names)}\n")
    save_forest(result.forest, os.path.join(out, "forest.npz"))

    c = result.centered
    n = d.n
    blank = [""] * n
    m1 = [format_value(v) for v in c.m_hat_1] if c.m_hat_1 is not None else blank
    m0 = [format_value(v) for v in c.m_hat_0] if c.m_hat_0 is not None else blank
    _write_table(os.path.join(out, "centered.csv"),
                 ["row", "y_tilde", "w_tilde", "e_hat", "e_hat_raw", "m_hat",
                  "m_hat_1", "m_hat_0"],
                 ((i, c.y_tilde[i], c.w_tilde[i], c.e_hat[i], c.e_hat_raw[i],
                   c.m_hat[i], m1[i], m0[i]) for i in range(n)))
    _write_table(os.path.join(out, "scores.csv"), ["row", "gamma"],
                 ((i, g) for i, g in enumerate(result.scores.gamma)))
    _write_table(os.path.join(out, "tau_oob.csv"), ["row", "tau_oob"],
                 ((i, v) for i, v in enumerate(result.tau_oob)))
    _write_table(os.path.join(out, "ate.csv"),
                 ["point", "se", "formula", "n"],
                 [(result.ate.point, result.ate.se, result.scores.formula_tag, n)])
    report = overlap_check(c)
    with open(os.path.join(out, "overlap.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text() + "\n")
    with open(os.path.join(out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(summarize(d).to_text() + "\n\n")
        fh.write(f"ATE = {result.ate.point:.6g} (se {result.ate.se:.6g}, "
                 f"formula {result.scores.formula_tag})\n")
    timings["persist"] = time.perf_counter() - t2
    timings["total"] = time.perf_counter() - t0

    inputs = [args.input] + ([args.schema] if args.schema else [])
    _write_manifest(out, "fit", args.seed, args.threads,
                    {"nuisance_params": asdict(nuisance),
                     "causal_params": asdict(causal),
                     "score_formula": args.score_formula,
                     "score_formula_tag": result.scores.formula_tag,
                     "clamp": list(clamp),
                     "n_clamped": c.n_clamped,
                     "n_oob_backfilled": c.n_oob_backfilled,
                     "treatment_is_binary": d.treatment_is_binary},
                    inputs,
                    ["train.csv", "schema.txt", "forest.npz", "centered.csv",
                     "scores.csv", "tau_oob.csv", "ate.csv", "overlap.txt",
                     "summary.txt"],
                    timings)
    print(f"ATE = {result.ate.point:.6g} (se {result.ate.se:.6g}) over {n} rows; "
          f"artifacts in {out}")
    return 0


# ---------------------------------------------------------------- estimate


def _read_query_matrix(path: str, feature_names: List[str]) -> np.ndarray:
    cols = _read_table(path)
    missing = [f for f in feature_names if f not in cols]
    if missing:
        raise DataError(f"query file {path} lacks feature columns {missing}")
    columns = []
    for f in feature_names:
        try:
            columns.append([float(v) for v in cols[f]])
        except ValueError:
            raise DataError(f"query file {path}, column {f!r}: "
                            "every cell must be numeric") from None
    return np.ascontiguousarray(np.array(columns, dtype=np.float64).T)


def _cmd_estimate(args) -> int:
    t0 = time.perf_counter()
    manifest = _load_run_manifest(args.input)
    d = _load_run_dataset(args.input)
    forest = _load_run_forest(args.input)
    g = _load_run_scores(args.input, manifest)
    if args.query:
        xq = _read_query_matrix(args.query, d.feature_names)
    else:
        xq = d.x
    points, ses = estimate_cate_batch(forest, g, xq, threads=args.threads)
    out = _ensure_out(_default_out(args, args.input, "estimate"))
    _write_table(os.path.join(out, "cate.csv"), ["row", "tau_hat", "se"],
                 ((i, points[i], ses[i]) for i in range(points.size)))
    inputs = [os.path.join(args.input, n) for n in ("forest.npz", "scores.csv")]
    if args.query:
        inputs.append(args.query)
    _write_manifest(out, "estimate", None, args.threads,
                    {"run": args.input, "query": args.query,
                     "n_queries": int(points.size)},
                    inputs, ["cate.csv"], {"total": time.perf_counter() - t0})
    print(f"wrote {points.size} effect estimates to {out}")
    return 0


# ---------------------------------------------------------------- importance


def _cmd_importance(args) -> int:
    t0 = time.perf_counter()
    _load_run_manifest(args.input)
    d = _load_run_dataset(args.input)
    forest = _load_run_forest(args.input)
    table = variable_importance(forest, d.feature_names)
    out = _ensure_out(_default_out(args, args.input, "importance"))
    _write_table(os.path.join(out, "importance.csv"),
                 ["rank", "feature", "importance"],
                 ((i + 1, f, v) for i, (f, v) in
                  enumerate(zip(table.features, table.importance))))
    with open(os.path.join(out, "importance.txt"), "w", encoding="utf-8") as fh:
        fh.write(table.to_text() + "\n")
    _write_manifest(out, "importance", None, None,
                    {"run": args.input, "degenerate": table.degenerate},
                    [os.path.join(args.input, "forest.npz")],
                    ["importance.csv", "importance.txt"],
                    {"total": time.perf_counter() - t0})
    print(f"wrote importance for {len(table.features)} features to {out}")
    return 0


# ---------------------------------------------------------------- shap


def _cmd_shap(args) -> int:
    t0 = time.perf_counter()
    manifest = _load_run_manifest(args.input)
    d = _load_run_dataset(args.input)
    forest = _load_run_forest(args.input)
    g = _load_run_scores(args.input, manifest)
    rows = _parse_int_list(args.rows, "--rows")
    bad = [r for r in rows if not 0 <= r < d.n]
    if bad:
        raise UsageError(f"--rows indices {bad} outside the training data (n = {d.n})")
    background = select_background(d.x, max_rows=args.background, seed=args.seed)

    explanations = []
    for r in rows:
        if args.permutations == 0:
            e = shap_exact(forest, g, d.x[r], background, threads=args.threads)
        else:
            e = shap_sampled(forest, g, d.x[r], background,
                             n_permutations=args.permutations, seed=args.seed,
                             threads=args.threads)
        explanations.append(e)

    out = _ensure_out(_default_out(args, args.input, "shap"))
    records = []
    for r, e in zip(rows, explanations):
        for j, name in enumerate(d.feature_names):
            records.append((r, name, e.query[j], e.contributions[j],
                            e.base_value, e.prediction, e.method,
                            "" if e.mc_se is None else format_value(e.mc_se[j])))
    _write_table(os.path.join(out, "shap.csv"),
                 ["row", "feature", "feature_value", "contribution",
                  "base_value", "prediction", "method", "mc_se"], records)
    swarm = aggregate_shap(explanations, d.feature_names)
    _write_table(os.path.join(out, "shap_summary.csv"),
                 ["feature", "mean_abs_contribution"],
                 zip(swarm.features, swarm.mean_abs))
    artifacts = ["shap.csv", "shap_summary.csv"]
    if args.svg:
        first = explanations[0]
        with open(os.path.join(out, "waterfall.svg"), "w", encoding="utf-8") as fh:
            fh.write(_svg.waterfall(d.feature_names, first.contributions,
                                    first.base_value, first.prediction))
        with open(os.path.join(out, "beeswarm.svg"), "w", encoding="utf-8") as fh:
            fh.write(_svg.beeswarm(swarm.features, swarm.rows))
        artifacts += ["waterfall.svg", "beeswarm.svg"]
    _write_manifest(out, "shap", args.seed, args.threads,
                    {"run": args.input, "rows": rows,
                     "permutations": args.permutations,
                     "background_rows": int(background.shape[0])},
                    [os.path.join(args.input, n) for n in ("forest.npz", "scores.csv")],
                    artifacts, {"total": time.perf_counter() - t0})
    print(f"explained {len(rows)} rows "
          f"({explanations[0].method} values) into {out}")
    return 0


# ---------------------------------------------------------------- tree


def _render_tree(tree: Tree, feature_names: List[str]) -> str:
    lines: List[str] = []

    def walk(node: int, indent: int) -> None:
        pad = "  " * indent
        n_est = int(tree.est_end[node] - tree.est_start[node])
        if tree.left[node] < 0:
            lines.append(f"{pad}leaf: effect = {tree.value[node]:.6g} (n = {n_est})")
            return
        name = feature_names[tree.feature[node]]
        lines.append(f"{pad}if {name} <= {format_value(tree.threshold[node])}:")
        walk(tree.left[node], indent + 1)
        lines.append(f"{pad}else:")
        walk(tree.right[node], indent + 1)

    walk(0, 0)
    return "\n".join(lines)


def _tree_json(tree: Tree, feature_names: List[str]) -> dict:
    return {
        "feature_names": feature_names,
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
        "depth": tree.depth.tolist(),
        "n_est": (tree.est_end - tree.est_start).tolist(),
    }


def _cmd_tree(args) -> int:
    t0 = time.perf_counter()
    manifest = _load_run_manifest(args.input)
    d = _load_run_dataset(args.input)
    forest = _load_run_forest(args.input)
    out = _ensure_out(_default_out(args, args.input, "tree"))
    artifacts = ["tree.txt", "tree.json"]
    if args.distilled:
        g = _load_run_scores(args.input, manifest)
        student = distill_tree(forest, g, d.x, threads=args.threads)
        tree = student.trees[0]
        meta = {"kind": "distilled", "max_depth": student.params.max_depth}
        header = "distilled tree (single CART fit to the forest's effect estimates)"
    else:
        c = _load_run_centered(args.input, manifest, d)
        rep = representative_tree(forest, d.x, c)
        tree = rep.tree
        meta = {"kind": "representative", "member_index": rep.index,
                "loss": rep.loss}
        header = (f"representative tree (member {rep.index}, "
                  f"loss {rep.loss:.6g} over {forest.num_trees} trees)")
        _write_table(os.path.join(out, "member_losses.csv"), ["tree", "loss"],
                     enumerate(rep.member_losses))
        artifacts.append("member_losses.csv")
    with open(os.path.join(out, "tree.txt"), "w", encoding="utf-8") as fh:
        fh.write(header + "\n\n" + _render_tree(tree, d.feature_names) + "\n")
    payload = dict(meta)
    payload.update(_tree_json(tree, d.feature_names))
    with open(os.path.join(out, "tree.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    _write_manifest(out, "tree", None, args.threads,
                    {"run": args.input, **meta},
                    [os.path.join(args.input, "forest.npz")],
                    artifacts, {"total": time.perf_counter() - t0})
    print(f"wrote {meta['kind']} tree to {out}")
    return 0


# ---------------------------------------------------------------- rashomon


def _cmd_rashomon(args) -> int:
    t0 = time.perf_counter()
    manifest = _load_run_manifest(args.input)
    d = _load_run_dataset(args.input)
    c = _load_run_centered(args.input, manifest, d)
    params = ForestParams(**manifest["parameters"]["causal_params"])
    baseline_size = args.trees if args.trees else params.num_trees
    sizes = _parse_int_list(args.sizes, "--sizes")
    curve = rashomon_curve(d, c, params, sizes, baseline_size, d.x,
                           score_formula=manifest["parameters"]["score_formula"],
                           threads=args.threads)
    out = _ensure_out(_default_out(args, args.input, "rashomon"))
    _write_table(
        os.path.join(out, "rashomon.csv"),
        ["label", "ensemble_size", "relative_r_loss",
         "abs_err_p25", "abs_err_p50", "abs_err_p75",
         "abs_err_p25_untrimmed", "abs_err_p50_untrimmed", "abs_err_p75_untrimmed"],
        ((p.label, p.ensemble_size, p.relative_r_loss,
          p.abs_error_quantiles["p25"], p.abs_error_quantiles["p50"],
          p.abs_error_quantiles["p75"],
          p.abs_error_quantiles_untrimmed["p25"],
          p.abs_error_quantiles_untrimmed["p50"],
          p.abs_error_quantiles_untrimmed["p75"]) for p in curve.points))
    artifacts = ["rashomon.csv"]
    if args.svg:
        pts = [(p.label, p.ensemble_size, p.relative_r_loss) for p in curve.points]
        with open(os.path.join(out, "rashomon.svg"), "w", encoding="utf-8") as fh:
            fh.write(_svg.rashomon(pts, curve.baseline_r_loss))
        artifacts.append("rashomon.svg")
    _write_manifest(out, "rashomon", None, args.threads,
                    {"run": args.input, "sizes": sizes,
                     "baseline_size": curve.baseline_size,
                     "baseline_r_loss": curve.baseline_r_loss},
                    [os.path.join(args.input, "centered.csv")],
                    artifacts, {"total": time.perf_counter() - t0})
    print(f"traced {len(curve.points)} ensemble sizes against a "
          f"{curve.baseline_size}-tree baseline into {out}")
    return 0


# ---------------------------------------------------------------- blp


def _cmd_blp(args) -> int:
    t0 = time.perf_counter()
    manifest = _load_run_manifest(args.input)
    d = _load_run_dataset(args.input)
    g = _load_run_scores(args.input, manifest)
    if args.features:
        wanted = [f.strip() for f in args.features.split(",") if f.strip()]
        unknown = [f for f in wanted if f not in d.feature_names]
        if unknown:
            raise UsageError(f"--features names unknown columns {unknown}")
        idx = [d.feature_names.index(f) for f in wanted]
        x = d.x[:, idx]
        names = wanted
    else:
        x = d.x
        names = d.feature_names
    categorical = ([f.strip() for f in args.categorical.split(",") if f.strip()]
                   if args.categorical else [])
    result = blp(g, x, names, categorical=categorical,
                 min_category_count=args.min_category_count)
    out = _ensure_out(_default_out(args, args.input, "blp"))
    _write_table(os.path.join(out, "blp.csv"),
                 ["term", "coef", "se", "t_stat", "p_value", "stars"],
                 ((r.name, r.coef, r.se, r.t_stat, r.p_value, r.stars)
                  for r in result.rows))
    with open(os.path.join(out, "blp.txt"), "w", encoding="utf-8") as fh:
        fh.write(result.to_text() + "\n")
    _write_manifest(out, "blp", None, None,
                    {"run": args.input, "features": names,
                     "categorical": categorical,
                     "min_category_count": args.min_category_count,
                     "n_used": result.n_used, "n_dropped": result.n_dropped,
                     "excluded_levels": result.excluded_levels,
                     "reference_levels": result.reference_levels},
                    [os.path.join(args.input, "scores.csv")],
                    ["blp.csv", "blp.txt"], {"total": time.perf_counter() - t0})
    print(f"projected scores onto {len(result.rows)} terms "
          f"(n = {result.n_used}) into {out}")
    return 0


# ---------------------------------------------------------------- refute


def _cmd_refute(args) -> int:
    t0 = time.perf_counter()
    manifest = _load_run_manifest(args.input)
    d = _load_run_dataset(args.input)
    params = manifest["parameters"]
    nuisance = ForestParams(**params["nuisance_params"])
    causal = ForestParams(**params["causal_params"])
    runner = placebo_treatment if args.test == "placebo" else dummy_outcome
    result = runner(d, nuisance, causal, seed=args.seed,
                    score_formula=params["score_formula"],
                    clamp=tuple(params["clamp"]), threads=args.threads)
    out = _ensure_out(_default_out(args, args.input, f"refute_{args.test}"))
    _write_table(os.path.join(out, "refutation.csv"),
                 ["bin", "lo", "hi", "count", "mean_score"],
                 ((b.label, b.lo, b.hi, b.count,
                   "" if math.isnan(b.mean_score) else format_value(b.mean_score))
                  for b in result.profile))
    _write_table(os.path.join(out, "refutation_summary.csv"),
                 ["test", "ate", "se", "n", "seed"],
                 [(result.test, result.ate.point, result.ate.se, result.n,
                   result.seed)])
    artifacts = ["refutation.csv", "refutation_summary.csv"]
    if args.svg:
        bins = [(b.label, b.count, b.mean_score) for b in result.profile]
        title = ("mean score by decile of the real treatment"
                 if args.test == "placebo"
                 else "mean score by decile of the real outcome")
        with open(os.path.join(out, "profile.svg"), "w", encoding="utf-8") as fh:
            fh.write(_svg.profile(bins, title))
        artifacts.append("profile.svg")
    _write_manifest(out, "refute", args.seed, args.threads,
                    {"run": args.input, "test": args.test},
                    [os.path.join(args.input, "train.csv")],
                    artifacts, {"total": time.perf_counter() - t0})
    verdict = "consistent with zero" if abs(result.ate.point) < 2 * result.ate.se \
        else "NOT consistent with zero"
    print(f"{result.test}: ATE = {result.ate.point:.6g} "
          f"(se {result.ate.se:.6g}) -> {verdict}; artifacts in {out}")
    return 0


# ---------------------------------------------------------------- report


def _cmd_report(args) -> int:
    t0 = time.perf_counter()
    manifest = _load_run_manifest(args.input)
    d = _load_run_dataset(args.input)
    forest = _load_run_forest(args.input)
    g = _load_run_scores(args.input, manifest)
    ate_cols = _read_table(_run_file(args.input, "ate.csv"))

    lines = ["# Effect estimation report", ""]
    lines += [f"- run directory: `{args.input}`",
              f"- fitted: {manifest['created_utc']} "
              f"(seed {manifest['seed']}, "
              f"{manifest['parameters']['causal_params']['num_trees']} trees)",
              f"- score formula: {manifest['parameters']['score_formula_tag']}", ""]

    lines += ["## Data", "", "```", summarize(d).to_text(), "```", ""]

    point = float(ate_cols["point"][0])
    se = float(ate_cols["se"][0])
    lines += ["## Average effect", "",
              f"ATE = **{point:.6g}** (se {se:.6g}, n = {d.n}); "
              f"95% interval [{point - 1.96 * se:.6g}, {point + 1.96 * se:.6g}].",
              ""]

    table = variable_importance(forest, d.feature_names)
    lines += ["## Variable importance (top 10)", "",
              "| rank | feature | importance |", "| --- | --- | --- |"]
    for i, (f, v) in enumerate(list(zip(table.features, table.importance))[:10]):
        lines.append(f"| {i + 1} | {f} | {v:.6f} |")
    lines.append("")

    lines += ["## Best linear projection", ""]
    try:
        result = blp(g, d.x, d.feature_names,
                     min_category_count=args.min_category_count)
        lines += ["```", result.to_text(), "```", ""]
    except (DataError, NumericError) as exc:
        lines += [f"not available: {exc}", ""]

    refutations = []
    for name in sorted(os.listdir(args.input)):
        summary_path = os.path.join(args.input, name, "refutation_summary.csv")
        if os.path.exists(summary_path):
            cols = _read_table(summary_path)
            refutations.append({k: v[0] for k, v in cols.items()})
    lines += ["## Refutation checks", ""]
    if refutations:
        lines += ["| test | ATE | se | n | seed |", "| --- | --- | --- | --- | --- |"]
        for r in refutations:
            lines.append(f"| {r['test']} | {float(r['ate']):.6g} | "
                         f"{float(r['se']):.6g} | {r['n']} | {r['seed']} |")
        lines.append("")
    else:
        lines += ["none recorded; run `glassforest refute` to add them.", ""]

    overlap_path = os.path.join(args.input, "overlap.txt")
    if os.path.exists(overlap_path):
        with open(overlap_path, encoding="utf-8") as fh:
            lines += ["## Overlap", "", "```", fh.read().rstrip(), "```", ""]

    out = _ensure_out(_default_out(args, args.input, "report"))
    with open(os.path.join(out, "report.md"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
    _write_manifest(out, "report", None, None,
                    {"run": args.input,
                     "refutations": [r["test"] for r in refutations]},
                    [os.path.join(args.input, "ate.csv")],
                    ["report.md"], {"total": time.perf_counter() - t0})
    print(f"wrote report.md to {out}")
    return 0


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glassforest",
                     description="Heterogeneous treatment effects with "
                                 "honest forests, plus the tools to see inside them.")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate synthetic data with known truth")
    p.add_argument("--preset", choices=sorted(_PRESETS), default="confounded")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--p", type=int, default=5)
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--treatment", choices=["binary", "continuous"], default="binary")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="run the full estimation pipeline")
    p.add_argument("--input", required=True, help="training CSV")
    p.add_argument("--schema", help="schema file; default treats columns w/y as roles")
    p.add_argument("--out", required=True, help="run directory to create")
    _forest_flags(p)
    p.add_argument("--score-formula", choices=["paper", "aipw"], default="paper")
    p.add_argument("--clamp", default=f"{DEFAULT_CLAMP[0]},{DEFAULT_CLAMP[1]}",
                   help="propensity clamp bounds 'lo,hi'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("estimate", help="per-row effect estimates from a fit run")
    p.add_argument("--input", required=True, help="run directory from fit")
    p.add_argument("--query", help="CSV of feature rows; default: training rows")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("importance", help="depth-weighted split-share importance")
    p.add_argument("--input", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_importance)

    p = sub.add_parser("shap", help="per-feature contributions at chosen rows")
    p.add_argument("--input", required=True)
    p.add_argument("--rows", default="0,1,2,3,4",
                   help="training row indices to explain")
    p.add_argument("--permutations", type=int, default=2000,
                   help="sampling permutations; 0 = exact enumeration")
    p.add_argument("--background", type=int, default=500,
                   help="background sample cap")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_shap)

    p = sub.add_parser("tree", help="representative or distilled single tree")
    p.add_argument("--input", required=True)
    p.add_argument("--distilled", action="store_true",
                   help="distill a fresh tree instead of picking a member")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_tree)

    p = sub.add_parser("rashomon", help="accuracy cost of smaller ensembles")
    p.add_argument("--input", required=True)
    p.add_argument("--sizes", default="1,10,100",
                   help="comma-separated ensemble sizes")
    p.add_argument("--trees", type=int, default=None,
                   help="baseline ensemble size; default: the run's setting")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_rashomon)

    p = sub.add_parser("blp", help="best linear projection of the scores")
    p.add_argument("--input", required=True)
    p.add_argument("--features", help="comma-separated subset; default: all")
    p.add_argument("--categorical", help="comma-separated categorical features")
    p.add_argument("--min-category-count", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_blp)

    p = sub.add_parser("refute", help="placebo-treatment / dummy-outcome checks")
    p.add_argument("--input", required=True)
    p.add_argument("--test", choices=["placebo", "dummy"], required=True)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_refute)

    p = sub.add_parser("report", help="single document aggregating run artifacts")
    p.add_argument("--input", required=True)
    p.add_argument("--min-category-count", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise UsageError("no subcommand given (see --help)")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
