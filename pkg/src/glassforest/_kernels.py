"""Compiled hot loops for tree growing, routing, and kernel-weighted estimates.

Everything here is deterministic given its inputs: feature subsampling uses an
explicit splitmix64 state threaded through the grower, and all reductions run
sequentially inside a single call, so results are bit-identical no matter how
many worker threads drive these kernels from the Python layer.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _splitmix64(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True, nogil=True)
def grow_tree(x, wy, w2, sid, eid, min_leaf, max_depth, mtry, feat_seed):
    """Grow one tree by weighted least-squares split search.

    x is the full (n, p) feature matrix; wy and w2 are the per-unit values
    w*y and w*w of the working response and regressor (w == 1 recovers plain
    variance-reduction regression splits). sid / eid hold the indices of the
    split half and the estimation half; both are reordered in place so every
    node owns a contiguous range of each. Splits maximise

        (sum wy_left)^2 / sum w2_left + (sum wy_right)^2 / sum w2_right

    over midpoint thresholds of each candidate feature, subject to min_leaf
    on both halves of both children and to strictly positive w2 mass on each
    side. Ties break toward the lowest feature index, then lowest threshold.
    Node values are always computed from the estimation half. max_depth
    counts split layers with the root at depth 1.
    """
    n_split = sid.size
    n_est = eid.size
    p = x.shape[1]

    cap = 2 * (n_split // max(1, min_leaf) + 1) + 3
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap, np.float64)
    depth = np.zeros(cap, np.int64)
    s_start = np.zeros(cap, np.int64)
    s_end = np.zeros(cap, np.int64)
    e_start = np.zeros(cap, np.int64)
    e_end = np.zeros(cap, np.int64)

    xv = np.empty(n_split, np.float64)
    xe = np.empty(n_est, np.float64)
    tmp = np.empty(max(n_split, n_est), np.int64)
    pool = np.arange(p)
    m = mtry if mtry < p else p
    chosen = np.empty(m, np.int64)
    state = feat_seed

    n_nodes = 1
    depth[0] = 1
    s_end[0] = n_split
    e_end[0] = n_est

    stack = np.empty(cap, np.int64)
    top = 0
    stack[top] = 0
    top += 1

    while top > 0:
        top -= 1
        nid = stack[top]
        s0 = s_start[nid]
        s1 = s_end[nid]
        e0 = e_start[nid]
        e1 = e_end[nid]
        ns = s1 - s0
        ne = e1 - e0

        evy = 0.0
        ew2 = 0.0
        for k in range(e0, e1):
            i = eid[k]
            evy += wy[i]
            ew2 += w2[i]
        if ew2 > 0.0:
            value[nid] = evy / ew2
        else:
            value[nid] = 0.0

        if ns < 2 * min_leaf or ne < 2 * min_leaf or depth[nid] > max_depth:
            continue

        twy = 0.0
        tw2 = 0.0
        for k in range(s0, s1):
            i = sid[k]
            twy += wy[i]
            tw2 += w2[i]
        if tw2 > 0.0:
            parent_score = twy * twy / tw2
        else:
            parent_score = 0.0

        for ii in range(m):
            state, z = _splitmix64(state)
            j = ii + np.int64(z % np.uint64(p - ii))
            t = pool[ii]
            pool[ii] = pool[j]
            pool[j] = t
            chosen[ii] = pool[ii]
        for ai in range(1, m):
            key = chosen[ai]
            bi = ai - 1
            while bi >= 0 and chosen[bi] > key:
                chosen[bi + 1] = chosen[bi]
                bi -= 1
            chosen[bi + 1] = key

        best_gain = parent_score + 1e-10 * (abs(parent_score) + 1e-10)
        best_feat = -1
        best_thr = 0.0

        for ci in range(m):
            f = chosen[ci]
            for k in range(ns):
                xv[k] = x[sid[s0 + k], f]
            order = np.argsort(xv[:ns])
            for k in range(ne):
                xe[k] = x[eid[e0 + k], f]
            eorder = np.argsort(xe[:ne])

            cwy = 0.0
            cw2 = 0.0
            et = 0
            ew2l = 0.0
            for k in range(ns - 1):
                i = sid[s0 + order[k]]
                cwy += wy[i]
                cw2 += w2[i]
                lo = xv[order[k]]
                hi = xv[order[k + 1]]
                if not (lo < hi):
                    continue
                thr = 0.5 * (lo + hi)
                if thr >= hi:
                    # adjacent floats: fall back to the lower value so routing
                    # by (value <= thr) matches the counted partition exactly
                    thr = lo
                while et < ne and xe[eorder[et]] <= thr:
                    ew2l += w2[eid[e0 + eorder[et]]]
                    et += 1
                nl = k + 1
                nr = ns - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                el = et
                er = ne - el
                if el < min_leaf or er < min_leaf:
                    continue
                cw2r = tw2 - cw2
                ew2r = ew2 - ew2l
                if cw2 <= 0.0 or cw2r <= 0.0 or ew2l <= 0.0 or ew2r <= 0.0:
                    continue
                rwy = twy - cwy
                gain = cwy * cwy / cw2 + rwy * rwy / cw2r
                if gain > best_gain:
                    best_gain = gain
                    best_feat = f
                    best_thr = thr

        if best_feat < 0:
            continue

        # stable partition of both halves by the chosen split
        a = 0
        for k in range(s0, s1):
            i = sid[k]
            if x[i, best_feat] <= best_thr:
                tmp[a] = i
                a += 1
        nl_s = a
        for k in range(s0, s1):
            i = sid[k]
            if x[i, best_feat] > best_thr:
                tmp[a] = i
                a += 1
        for k in range(ns):
            sid[s0 + k] = tmp[k]

        a = 0
        for k in range(e0, e1):
            i = eid[k]
            if x[i, best_feat] <= best_thr:
                tmp[a] = i
                a += 1
        nl_e = a
        for k in range(e0, e1):
            i = eid[k]
            if x[i, best_feat] > best_thr:
                tmp[a] = i
                a += 1
        for k in range(ne):
            eid[e0 + k] = tmp[k]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[nid] = best_feat
        threshold[nid] = best_thr
        left[nid] = lid
        right[nid] = rid
        depth[lid] = depth[nid] + 1
        depth[rid] = depth[nid] + 1
        s_start[lid] = s0
        s_end[lid] = s0 + nl_s
        s_start[rid] = s0 + nl_s
        s_end[rid] = s1
        e_start[lid] = e0
        e_end[lid] = e0 + nl_e
        e_start[rid] = e0 + nl_e
        e_end[rid] = e1
        stack[top] = rid
        top += 1
        stack[top] = lid
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        depth[:n_nodes].copy(),
        e_start[:n_nodes].copy(),
        e_end[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def route_rows(x, feature, threshold, left, right, out):
    """Assign each row of x to its leaf node id for one tree."""
    for r in range(x.shape[0]):
        nid = 0
        while left[nid] >= 0:
            if x[r, feature[nid]] <= threshold[nid]:
                nid = left[nid]
            else:
                nid = right[nid]
        out[r] = nid


@njit(cache=True, nogil=True)
def cate_batch(xq, roots, feature, threshold, left, right,
               e_start, e_end, est_ids, gamma, out_tau, out_se):
    """Kernel-weighted effect and spread for a batch of query rows.

    Tree node arrays are concatenated across the forest with child links and
    estimation ranges rebased to absolute offsets; roots[t] is tree t's root
    node id. For each query the co-leaf weights over training units are
    accumulated, normalised to sum one, and folded against the per-unit
    scores gamma.
    """
    n_units = gamma.size
    n_trees = roots.size
    w = np.zeros(n_units, np.float64)
    for q in range(xq.shape[0]):
        for i in range(n_units):
            w[i] = 0.0
        for t in range(n_trees):
            nid = roots[t]
            while left[nid] >= 0:
                if xq[q, feature[nid]] <= threshold[nid]:
                    nid = left[nid]
                else:
                    nid = right[nid]
            lo = e_start[nid]
            hi = e_end[nid]
            if hi > lo:
                inv = 1.0 / (hi - lo)
                for k in range(lo, hi):
                    w[est_ids[k]] += inv
        s = 0.0
        for i in range(n_units):
            s += w[i]
        if s <= 0.0:
            out_tau[q] = np.nan
            out_se[q] = np.nan
            continue
        tau = 0.0
        for i in range(n_units):
            if w[i] > 0.0:
                tau += (w[i] / s) * gamma[i]
        var = 0.0
        for i in range(n_units):
            if w[i] > 0.0:
                a = w[i] / s
                d = gamma[i] - tau
                var += a * a * d * d
        out_tau[q] = tau
        out_se[q] = np.sqrt(var)


@njit(cache=True, nogil=True)
def weights_single(xq_row, roots, feature, threshold, left, right,
                   e_start, e_end, est_ids, n_units):
    """Normalised co-leaf weight vector over training units for one query."""
    n_trees = roots.size
    w = np.zeros(n_units, np.float64)
    for t in range(n_trees):
        nid = roots[t]
        while left[nid] >= 0:
            if xq_row[feature[nid]] <= threshold[nid]:
                nid = left[nid]
            else:
                nid = right[nid]
        lo = e_start[nid]
        hi = e_end[nid]
        if hi > lo:
            inv = 1.0 / (hi - lo)
            for k in range(lo, hi):
                w[est_ids[k]] += inv
    s = 0.0
    for i in range(n_units):
        s += w[i]
    if s > 0.0:
        for i in range(n_units):
            w[i] /= s
    return w
