"""Hot kernels for CART regression trees: exact best-split search over
presorted feature segments, tree growth, and ensemble prediction.

Two complete implementations live here. The loop-based one is compiled with
``numba.njit`` when the backend allows it; the fallback is vectorized numpy.
Both follow the identical arithmetic (sequential cumulative sums, stable
partitions, first-maximum tie-breaking), so the fitted trees and all
predictions are bit-identical across backends.

Split rule: axis-aligned squared-error reduction. Ties in gain break toward
the lowest feature index, then the lowest threshold. A split must strictly
reduce the squared error, only occurs between distinct consecutive values,
and must leave at least ``min_leaf`` rows on each side.

Fitting takes ``sorted_idx`` (p, n): for each feature, row indices in stable
ascending order of that feature's values. Sorting happens once per matrix
(boosting reuses it across every round) and node partitions keep each
feature segment sorted, so split search is a linear scan.

Candidate features per node come from ``cand``, a 2-D int array; node
``slot`` uses row ``slot % cand.shape[0]``. Pass a single row ``arange(p)``
for deterministic all-feature splits (boosting) or a pre-generated matrix of
sorted random subsets (forest mtry).
"""

import numpy as np

from ._backend import NUMBA_AVAILABLE, NUMBA_ENABLED

if NUMBA_AVAILABLE:
    from numba import prange as _row_range
else:  # pragma: no cover
    _row_range = range


def presort(x):
    """Stable per-feature orderings, shape (p, n); reusable across fits on
    the same matrix."""
    return np.stack([np.argsort(x[:, f], kind="mergesort") for f in range(x.shape[1])])


def _fit_tree_loops(x, y, sorted_idx, max_depth, min_leaf, cand, max_nodes):
    n = x.shape[0]
    p = x.shape[1]
    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes, np.float64)

    idx = np.arange(n)
    seg = sorted_idx.copy()
    buf = np.empty(n, np.int64)
    goes_left = np.zeros(n, np.uint8)

    stack_start = np.empty(max_nodes + 1, np.int64)
    stack_end = np.empty(max_nodes + 1, np.int64)
    stack_depth = np.empty(max_nodes + 1, np.int64)
    stack_slot = np.empty(max_nodes + 1, np.int64)
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    stack_slot[0] = 0
    sp = 1
    n_nodes = 1
    cand_rows = cand.shape[0]

    while sp > 0:
        sp -= 1
        start = stack_start[sp]
        end = stack_end[sp]
        depth = stack_depth[sp]
        slot = stack_slot[sp]
        nn = end - start

        s = 0.0
        for i in range(start, end):
            s += y[idx[i]]
        value[slot] = s / nn

        if depth >= max_depth or nn < 2 * min_leaf:
            continue

        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        crow = cand[slot % cand_rows]
        for ci in range(crow.shape[0]):
            f = crow[ci]
            total = 0.0
            for i in range(start, end):
                total += y[seg[f, i]]
            base = total * total / nn
            fbest_gain = 0.0
            fbest_pos = -1
            run = 0.0
            for i in range(min_leaf - 1):
                run += y[seg[f, start + i]]
            for i in range(min_leaf - 1, nn - min_leaf):
                run += y[seg[f, start + i]]
                xa = x[seg[f, start + i], f]
                xb = x[seg[f, start + i + 1], f]
                if xb > xa:
                    nl = float(i + 1)
                    nr = float(nn - i - 1)
                    sr = total - run
                    g = run * run / nl + sr * sr / nr - base
                    if g > fbest_gain:
                        fbest_gain = g
                        fbest_pos = i
            if fbest_pos >= 0 and fbest_gain > best_gain:
                best_gain = fbest_gain
                best_f = f
                a = x[seg[f, start + fbest_pos], f]
                b = x[seg[f, start + fbest_pos + 1], f]
                thr = (a + b) * 0.5
                if not (thr < b):
                    # midpoint rounded up to b; fall back so the right child
                    # stays nonempty under the `<= thr` routing rule
                    thr = a
                best_thr = thr

        if best_f < 0:
            continue

        n_left = 0
        for i in range(start, end):
            row = idx[i]
            if x[row, best_f] <= best_thr:
                goes_left[row] = 1
                n_left += 1
            else:
                goes_left[row] = 0

        k = 0
        k2 = n_left
        for i in range(start, end):
            row = idx[i]
            if goes_left[row] == 1:
                buf[start + k] = row
                k += 1
            else:
                buf[start + k2] = row
                k2 += 1
        for i in range(start, end):
            idx[i] = buf[i]

        for f in range(p):
            k = 0
            k2 = n_left
            for i in range(start, end):
                row = seg[f, i]
                if goes_left[row] == 1:
                    buf[start + k] = row
                    k += 1
                else:
                    buf[start + k2] = row
                    k2 += 1
            for i in range(start, end):
                seg[f, i] = buf[i]

        mid = start + n_left
        ls = n_nodes
        rs = n_nodes + 1
        n_nodes += 2
        feature[slot] = best_f
        threshold[slot] = best_thr
        left[slot] = ls
        right[slot] = rs

        stack_start[sp] = mid
        stack_end[sp] = end
        stack_depth[sp] = depth + 1
        stack_slot[sp] = rs
        sp += 1
        stack_start[sp] = start
        stack_end[sp] = mid
        stack_depth[sp] = depth + 1
        stack_slot[sp] = ls
        sp += 1

    return feature, threshold, left, right, value, n_nodes


def _predict_ensemble_loops(feature, threshold, left, right, value, offsets, x, scale, init):
    k = x.shape[0]
    out = np.empty(k, np.float64)
    n_trees = offsets.shape[0] - 1
    # rows are independent; with numba this loop runs as a prange and stays
    # deterministic because each row accumulates its own sum sequentially
    for r in _row_range(k):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if x[r, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[r] = init + scale * acc
    return out


def fit_tree_numpy(x, y, sorted_idx, max_depth, min_leaf, cand, max_nodes):
    """Vectorized-numpy twin of ``_fit_tree_loops``; identical output."""
    n = x.shape[0]
    p = x.shape[1]
    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes, np.float64)

    idx = np.arange(n)
    seg = sorted_idx.copy()
    goes_left = np.zeros(n, bool)
    stack = [(0, n, 0, 0)]
    n_nodes = 1
    cand_rows = cand.shape[0]

    while stack:
        start, end, depth, slot = stack.pop()
        nn = end - start
        value[slot] = np.cumsum(y[idx[start:end]])[-1] / nn

        if depth >= max_depth or nn < 2 * min_leaf:
            continue

        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for f in cand[slot % cand_rows]:
            rows = seg[f, start:end]
            xs = x[rows, f]
            cs = np.cumsum(y[rows])
            total = cs[nn - 1]
            base = total * total / nn
            nl = np.arange(1.0, nn)
            sl = cs[:-1]
            gains = sl * sl / nl + (total - sl) * (total - sl) / (nn - nl) - base
            valid = xs[1:] > xs[:-1]
            if min_leaf > 1:
                valid[: min_leaf - 1] = False
                valid[nn - min_leaf :] = False
            gains[~valid] = -np.inf
            pos = int(np.argmax(gains))
            if valid[pos] and gains[pos] > best_gain:
                best_gain = gains[pos]
                best_f = int(f)
                a = xs[pos]
                b = xs[pos + 1]
                thr = (a + b) * 0.5
                if not (thr < b):
                    thr = a
                best_thr = thr

        if best_f < 0:
            continue

        node_rows = idx[start:end]
        goes_left[node_rows] = x[node_rows, best_f] <= best_thr
        mask = goes_left[node_rows]
        idx[start:end] = np.concatenate((node_rows[mask], node_rows[~mask]))
        for f in range(p):
            rows = seg[f, start:end]
            m = goes_left[rows]
            seg[f, start:end] = np.concatenate((rows[m], rows[~m]))
        mid = start + int(mask.sum())

        ls = n_nodes
        rs = n_nodes + 1
        n_nodes += 2
        feature[slot] = best_f
        threshold[slot] = best_thr
        left[slot] = ls
        right[slot] = rs
        stack.append((mid, end, depth + 1, rs))
        stack.append((start, mid, depth + 1, ls))

    return feature, threshold, left, right, value, n_nodes


def predict_ensemble_numpy(feature, threshold, left, right, value, offsets, x, scale, init):
    """Vectorized-numpy twin of ``_predict_ensemble_loops``."""
    k = x.shape[0]
    acc = np.zeros(k, np.float64)
    for t in range(offsets.shape[0] - 1):
        sl = slice(int(offsets[t]), int(offsets[t + 1]))
        feat = feature[sl]
        thr = threshold[sl]
        lf = left[sl]
        rg = right[sl]
        val = value[sl]
        node = np.zeros(k, np.int64)
        active = feat[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = x[rows, feat[cur]] <= thr[cur]
            node[rows] = np.where(go_left, lf[cur], rg[cur])
            active = feat[node] >= 0
        acc += val[node]
    return init + scale * acc


if NUMBA_AVAILABLE:
    from numba import njit

    fit_tree_numba = njit(cache=True)(_fit_tree_loops)
    predict_ensemble_numba = njit(cache=True, parallel=True)(_predict_ensemble_loops)
else:  # pragma: no cover
    fit_tree_numba = None
    predict_ensemble_numba = None

if NUMBA_ENABLED:
    fit_tree = fit_tree_numba
    predict_ensemble = predict_ensemble_numba
else:
    fit_tree = fit_tree_numpy
    predict_ensemble = predict_ensemble_numpy
