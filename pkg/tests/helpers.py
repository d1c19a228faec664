"""Small shared utilities for the test suite.

Hand-built trees let tests assert kernel and importance arithmetic against
values computed on paper instead of against the fitting code itself.
"""

import numpy as np

from glassforest import Forest, ForestParams, Tree


def leaf_tree(value, est_ids):
    """A single-leaf tree whose estimation set is exactly est_ids."""
    est_ids = np.asarray(est_ids, dtype=np.int64)
    return Tree(
        feature=np.array([-1], dtype=np.int64),
        threshold=np.array([0.0], dtype=np.float64),
        left=np.array([-1], dtype=np.int64),
        right=np.array([-1], dtype=np.int64),
        value=np.array([float(value)], dtype=np.float64),
        depth=np.array([1], dtype=np.int64),
        est_start=np.array([0], dtype=np.int64),
        est_end=np.array([est_ids.size], dtype=np.int64),
        est_ids=est_ids,
        split_ids=est_ids.copy(),
        subsample=np.sort(est_ids),
    )


def stump_tree(feature, threshold, left_value, right_value, left_est, right_est):
    """Root split plus two leaves; rows go left when x[feature] <= threshold."""
    left_est = np.asarray(left_est, dtype=np.int64)
    right_est = np.asarray(right_est, dtype=np.int64)
    est_ids = np.concatenate([left_est, right_est])
    return Tree(
        feature=np.array([feature, -1, -1], dtype=np.int64),
        threshold=np.array([threshold, 0.0, 0.0], dtype=np.float64),
        left=np.array([1, -1, -1], dtype=np.int64),
        right=np.array([2, -1, -1], dtype=np.int64),
        value=np.array([0.0, float(left_value), float(right_value)], dtype=np.float64),
        depth=np.array([1, 2, 2], dtype=np.int64),
        est_start=np.array([0, 0, left_est.size], dtype=np.int64),
        est_end=np.array([est_ids.size, left_est.size, est_ids.size], dtype=np.int64),
        est_ids=est_ids,
        split_ids=est_ids.copy(),
        subsample=np.sort(est_ids),
    )


def forest_of(trees, n_features, n_train, kind="causal", seed=0):
    """Wrap hand-built trees in a Forest so the query machinery runs on them."""
    return Forest(trees=list(trees), params=ForestParams(num_trees=len(trees), seed=seed),
                  kind=kind, n_features=n_features, n_train=n_train)


def walk_leaf(tree, row):
    """Route one feature row to its leaf node index by hand."""
    k = 0
    while tree.left[k] >= 0:
        if row[tree.feature[k]] <= tree.threshold[k]:
            k = int(tree.left[k])
        else:
            k = int(tree.right[k])
    return k


def pearson(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.corrcoef(a, b)[0, 1])


def spearman(a, b):
    """Rank correlation without pulling in scipy."""
    def ranks(v):
        order = np.argsort(v, kind="stable")
        r = np.empty(v.size, dtype=np.float64)
        r[order] = np.arange(v.size)
        return r
    return pearson(ranks(np.asarray(a)), ranks(np.asarray(b)))


def naive_diff(d):
    """Unadjusted treated-minus-control outcome means."""
    return float(d.y[d.w == 1.0].mean() - d.y[d.w == 0.0].mean())
