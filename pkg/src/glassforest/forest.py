"""Honest subsampled regression forests.

Trees are grown on a subsample drawn without replacement. Under honesty the
subsample is split into a split half (chooses the partition) and an
estimation half (supplies every leaf value), so leaf values never depend on
the targets that picked the splits. Each tree consumes its own RNG stream
derived from (seed, tree index), which makes fits bit-identical for any
worker thread count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import DataError, NumericError

FOREST_FORMAT_VERSION = 1

_UNLIMITED_DEPTH = 2 ** 31


@dataclass
class ForestParams:
    """Knobs shared by every forest in the package.

    num_trees : ensemble size, must be positive.
    subsample_ratio : per-tree sampling fraction in (0, 1], without replacement.
    honesty : if True, split the subsample into disjoint split/estimation halves.
    honesty_ratio : fraction of the subsample used for split search.
    min_leaf_size : minimum samples per leaf, enforced on both halves.
    max_depth : number of split layers (root is layer 1); None means unlimited.
    mtry : features tried per split; None means ceil(sqrt(p)) at fit time.
    seed : base seed for all per-tree streams.
    """

    num_trees: int = 500
    subsample_ratio: float = 0.5
    honesty: bool = True
    honesty_ratio: float = 0.5
    min_leaf_size: int = 5
    max_depth: Optional[int] = None
    mtry: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise DataError("num_trees must be positive")
        if not 0.0 < self.subsample_ratio <= 1.0:
            raise DataError("subsample_ratio must lie in (0, 1]")
        if not 0.0 < self.honesty_ratio < 1.0:
            raise DataError("honesty_ratio must lie in (0, 1)")
        if self.min_leaf_size < 1:
            raise DataError("min_leaf_size must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise DataError("max_depth must be positive or None")
        if self.mtry is not None and self.mtry < 1:
            raise DataError("mtry must be positive or None")


@dataclass
class Tree:
    """One fitted tree in node-array form.

    Node k is internal when left[k] >= 0; internal nodes carry
    (feature, threshold) and route rows left when value <= threshold.
    value[k] is the estimation-half solution at node k. est_ids holds the
    estimation-half unit indices reordered so node k owns
    est_ids[est_start[k]:est_end[k]].
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: np.ndarray
    est_start: np.ndarray
    est_end: np.ndarray
    est_ids: np.ndarray
    split_ids: np.ndarray
    subsample: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def leaf_mask(self) -> np.ndarray:
        return self.left < 0


@dataclass
class Forest:
    """A fitted ensemble plus everything needed to reproduce or reuse it."""

    trees: list
    params: ForestParams
    kind: str
    n_features: int
    n_train: int
    _flat: Optional[tuple] = field(default=None, repr=False, compare=False)

    @property
    def num_trees(self) -> int:
        return len(self.trees)

    def flat(self) -> tuple:
        """Concatenated node arrays with links rebased to absolute ids."""
        if self._flat is None:
            self._flat = _flatten(self.trees)
        return self._flat


@dataclass
class OobResult:
    """Out-of-bag predictions with the undefined entries made explicit.

    values : per-unit OOB mean, back-filled with the full-forest prediction
        where no tree excluded the unit.
    undefined : True where the back-fill was applied.
    vote_counts : number of trees that voted for each unit.
    """

    values: np.ndarray
    undefined: np.ndarray
    vote_counts: np.ndarray


def _flatten(trees: Sequence[Tree]) -> tuple:
    n_nodes = np.array([t.n_nodes for t in trees], dtype=np.int64)
    node_base = np.concatenate(([0], np.cumsum(n_nodes)))
    est_sizes = np.array([t.est_ids.size for t in trees], dtype=np.int64)
    est_base = np.concatenate(([0], np.cumsum(est_sizes)))
    roots = node_base[:-1].copy()
    feature = np.concatenate([t.feature for t in trees])
    threshold = np.concatenate([t.threshold for t in trees])
    left = np.concatenate([np.where(t.left >= 0, t.left + node_base[i], -1)
                           for i, t in enumerate(trees)])
    right = np.concatenate([np.where(t.right >= 0, t.right + node_base[i], -1)
                            for i, t in enumerate(trees)])
    value = np.concatenate([t.value for t in trees])
    e_start = np.concatenate([t.est_start + est_base[i] for i, t in enumerate(trees)])
    e_end = np.concatenate([t.est_end + est_base[i] for i, t in enumerate(trees)])
    est_ids = np.concatenate([t.est_ids for t in trees])
    return (roots, feature, threshold, left, right, value, e_start, e_end, est_ids)


def _as_matrix(x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("feature matrix must be 2-dimensional")
    if not np.all(np.isfinite(x)):
        raise DataError("feature matrix contains non-finite values")
    return x


def _resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = os.cpu_count() or 1
    return max(1, int(threads))


def _fit_one_tree(x, wy, w2, params: ForestParams, mtry: int, max_depth: int,
                  tree_index: int) -> Tree:
    n = x.shape[0]
    rng = np.random.default_rng([params.seed, tree_index])
    n_sub = int(round(params.subsample_ratio * n))
    n_sub = min(max(n_sub, 1), n)
    subsample = np.sort(rng.choice(n, size=n_sub, replace=False)).astype(np.int64)
    if params.honesty and n_sub >= 2:
        perm = rng.permutation(n_sub)
        n_split = int(round(params.honesty_ratio * n_sub))
        n_split = min(max(n_split, 1), n_sub - 1)
        sid = subsample[perm[:n_split]].copy()
        eid = subsample[perm[n_split:]].copy()
    else:
        sid = subsample.copy()
        eid = subsample.copy()
    feat_seed = np.uint64(rng.integers(0, 2 ** 63))
    (feature, threshold, left, right, value, depth,
     est_start, est_end) = _kernels.grow_tree(
        x, wy, w2, sid, eid, params.min_leaf_size, max_depth, mtry, feat_seed)
    return Tree(feature=feature, threshold=threshold, left=left, right=right,
                value=value, depth=depth, est_start=est_start, est_end=est_end,
                est_ids=eid, split_ids=sid, subsample=subsample)


def fit_forest(x, wy, w2, params: ForestParams, kind: str,
               threads: Optional[int] = None) -> Forest:
    """Shared fitting loop for regression and effect trees.

    wy and w2 are the per-unit products w*y and w*w of the working response
    and regressor; regression passes w == 1 so leaf values are plain means.
    """
    x = _as_matrix(x)
    n, p = x.shape
    wy = np.ascontiguousarray(wy, dtype=np.float64)
    w2 = np.ascontiguousarray(w2, dtype=np.float64)
    if wy.shape != (n,) or w2.shape != (n,):
        raise DataError("target vectors must match the number of rows")
    if n < 2 * params.min_leaf_size:
        raise DataError("need at least 2 * min_leaf_size rows to fit")
    mtry = params.mtry if params.mtry is not None else int(math.ceil(math.sqrt(p)))
    mtry = min(mtry, p)
    max_depth = params.max_depth if params.max_depth is not None else _UNLIMITED_DEPTH
    n_threads = _resolve_threads(threads)

    def build(t):
        return _fit_one_tree(x, wy, w2, params, mtry, max_depth, t)

    if n_threads == 1 or params.num_trees == 1:
        trees = [build(t) for t in range(params.num_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees = list(pool.map(build, range(params.num_trees)))
    return Forest(trees=trees, params=params, kind=kind, n_features=p, n_train=n)


def fit_regression_forest(x, target, params: ForestParams,
                          threads: Optional[int] = None) -> Forest:
    """Fit an honest regression forest of conditional-mean trees.

    Parameters
    ----------
    x : (n, p) feature matrix.
    target : length-n response vector.
    params : ForestParams.
    threads : worker cap; None uses all available cores. Results do not
        depend on this value.
    """
    target = np.ascontiguousarray(target, dtype=np.float64)
    if target.ndim != 1:
        raise DataError("target must be a vector")
    if not np.all(np.isfinite(target)):
        raise DataError("target contains non-finite values")
    w2 = np.ones(target.shape[0], dtype=np.float64)
    return fit_forest(x, target, w2, params, kind="regression", threads=threads)


def tree_predict(tree: Tree, x) -> np.ndarray:
    """Leaf values of one tree for each row of x."""
    x = _as_matrix(x)
    out = np.empty(x.shape[0], dtype=np.int64)
    _kernels.route_rows(x, tree.feature, tree.threshold, tree.left, tree.right, out)
    return tree.value[out]


def predict(forest: Forest, x) -> np.ndarray:
    """Ensemble prediction: the mean of per-tree leaf values."""
    if forest.num_trees == 0:
        raise NumericError("cannot predict from an empty forest")
    x = _as_matrix(x)
    if x.shape[1] != forest.n_features:
        raise DataError("query matrix has wrong number of features")
    total = np.zeros(x.shape[0], dtype=np.float64)
    leaf = np.empty(x.shape[0], dtype=np.int64)
    for tree in forest.trees:
        _kernels.route_rows(x, tree.feature, tree.threshold, tree.left,
                            tree.right, leaf)
        total += tree.value[leaf]
    return total / forest.num_trees


def predict_oob(forest: Forest, x_train) -> OobResult:
    """Out-of-bag prediction on the training matrix.

    Each unit is averaged only over trees whose subsample excluded it. Units
    that every tree sampled get the full-forest prediction and are flagged.
    """
    if forest.num_trees == 0:
        raise NumericError("cannot predict from an empty forest")
    x_train = _as_matrix(x_train)
    n = x_train.shape[0]
    if n != forest.n_train or x_train.shape[1] != forest.n_features:
        raise DataError("x_train must be the matrix the forest was fitted on")
    sums = np.zeros(n, dtype=np.float64)
    counts = np.zeros(n, dtype=np.int64)
    leaf = np.empty(n, dtype=np.int64)
    in_sub = np.empty(n, dtype=bool)
    for tree in forest.trees:
        _kernels.route_rows(x_train, tree.feature, tree.threshold, tree.left,
                            tree.right, leaf)
        in_sub[:] = False
        in_sub[tree.subsample] = True
        out = ~in_sub
        sums[out] += tree.value[leaf[out]]
        counts[out] += 1
    undefined = counts == 0
    values = np.empty(n, dtype=np.float64)
    np.divide(sums, counts, out=values, where=~undefined)
    if undefined.any():
        fallback = predict(forest, x_train[undefined])
        values[undefined] = fallback
    return OobResult(values=values, undefined=undefined, vote_counts=counts)


def r_loss(tau_hat, y_tilde, w_tilde) -> float:
    """Mean squared residual-on-residual loss (1/n) * sum (y~ - w~ * tau)^2."""
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    y_tilde = np.asarray(y_tilde, dtype=np.float64)
    w_tilde = np.asarray(w_tilde, dtype=np.float64)
    if not (tau_hat.shape == y_tilde.shape == w_tilde.shape) or tau_hat.ndim != 1:
        raise DataError("r_loss inputs must be equal-length vectors")
    if tau_hat.size == 0:
        raise DataError("r_loss needs at least one observation")
    resid = y_tilde - w_tilde * tau_hat
    return float(np.mean(resid * resid))


def save_forest(forest: Forest, path: str) -> None:
    """Write a forest to a single versioned .npz artifact (lossless)."""
    trees = forest.trees
    meta = {
        "format_version": FOREST_FORMAT_VERSION,
        "kind": forest.kind,
        "n_features": forest.n_features,
        "n_train": forest.n_train,
        "num_trees": len(trees),
        "params": asdict(forest.params),
    }
    sizes = {
        "node_sizes": np.array([t.n_nodes for t in trees], dtype=np.int64),
        "est_sizes": np.array([t.est_ids.size for t in trees], dtype=np.int64),
        "split_sizes": np.array([t.split_ids.size for t in trees], dtype=np.int64),
        "sub_sizes": np.array([t.subsample.size for t in trees], dtype=np.int64),
    }
    np.savez(
        path,
        meta=np.array(json.dumps(meta)),
        feature=np.concatenate([t.feature for t in trees]),
        threshold=np.concatenate([t.threshold for t in trees]),
        left=np.concatenate([t.left for t in trees]),
        right=np.concatenate([t.right for t in trees]),
        value=np.concatenate([t.value for t in trees]),
        depth=np.concatenate([t.depth for t in trees]),
        est_start=np.concatenate([t.est_start for t in trees]),
        est_end=np.concatenate([t.est_end for t in trees]),
        est_ids=np.concatenate([t.est_ids for t in trees]),
        split_ids=np.concatenate([t.split_ids for t in trees]),
        subsample=np.concatenate([t.subsample for t in trees]),
        **sizes,
    )


def load_forest(path: str) -> Forest:
    """Read back a forest written by save_forest."""
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format_version") != FOREST_FORMAT_VERSION:
                raise DataError(
                    f"forest artifact at {path} has format version "
                    f"{meta.get('format_version')}, expected {FOREST_FORMAT_VERSION}")
            node_off = np.concatenate(([0], np.cumsum(z["node_sizes"])))
            est_off = np.concatenate(([0], np.cumsum(z["est_sizes"])))
            split_off = np.concatenate(([0], np.cumsum(z["split_sizes"])))
            sub_off = np.concatenate(([0], np.cumsum(z["sub_sizes"])))
            trees = []
            for t in range(meta["num_trees"]):
                a, b = node_off[t], node_off[t + 1]
                ea, eb = est_off[t], est_off[t + 1]
                sa, sb = split_off[t], split_off[t + 1]
                ua, ub = sub_off[t], sub_off[t + 1]
                trees.append(Tree(
                    feature=z["feature"][a:b].copy(),
                    threshold=z["threshold"][a:b].copy(),
                    left=z["left"][a:b].copy(),
                    right=z["right"][a:b].copy(),
                    value=z["value"][a:b].copy(),
                    depth=z["depth"][a:b].copy(),
                    est_start=z["est_start"][a:b].copy(),
                    est_end=z["est_end"][a:b].copy(),
                    est_ids=z["est_ids"][ea:eb].copy(),
                    split_ids=z["split_ids"][sa:sb].copy(),
                    subsample=z["subsample"][ua:ub].copy(),
                ))
    except OSError as exc:
        raise DataError(f"cannot read forest artifact at {path}: {exc}") from exc
    params = ForestParams(**meta["params"])
    return Forest(trees=trees, params=params, kind=meta["kind"],
                  n_features=meta["n_features"], n_train=meta["n_train"])
