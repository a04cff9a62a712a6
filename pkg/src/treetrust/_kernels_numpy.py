"""Pure-numpy kernel fallbacks.

Split scanning and prediction are vectorized; the Shapley path walk reuses
the shared scalar implementation, which is correct but markedly slower than
the compiled backend (see benchmarks/bench_backends.py).
"""

import numpy as np

from ._kernels_common import MODE_GINI, MODE_VARIANCE, shap_path_row


def scan_splits(X, a, b, cols, min_leaf, mode, lam, min_child_b):
    """Vectorized equivalent of the compiled split scan (same contract)."""
    n = X.shape[0]
    m = len(cols)
    scores = np.full(m, -np.inf)
    thresholds = np.full(m, np.nan)
    if n < 2:
        return scores, thresholds
    ta = float(np.sum(a))
    tb = float(np.sum(b))
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    for ci in range(m):
        j = int(cols[ci])
        col = X[:, j]
        order = np.argsort(col, kind="mergesort")
        xs = col[order]
        sa = np.cumsum(a[order])[:-1]
        sb = np.cumsum(b[order])[:-1]
        if mode == MODE_VARIANCE:
            sr = ta - sa
            s = sa * sa / nl + sr * sr / nr - ta * ta / n
        elif mode == MODE_GINI:
            sr = ta - sa
            s = 2.0 * (ta * (n - ta) / n - sa * (nl - sa) / nl
                       - sr * (nr - sr) / nr)
        else:
            gr = ta - sa
            hr = tb - sb
            s = 0.5 * (sa * sa / (sb + lam) + gr * gr / (hr + lam)
                       - ta * ta / (tb + lam))
        valid = ((xs[:-1] != xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
                 & (sb >= min_child_b) & (tb - sb >= min_child_b))
        if not valid.any():
            continue
        s = np.where(valid, s, -np.inf)
        i = int(np.argmax(s))
        v = xs[i]
        vn = xs[i + 1]
        t = 0.5 * (v + vn)
        if t >= vn:
            t = v
        scores[ci] = s[i]
        thresholds[ci] = t
    return scores, thresholds


def predict_tree(children_left, children_right, feature, threshold, value,
                 X, out):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    while True:
        f = feature[node]
        active = np.nonzero(f >= 0)[0]
        if active.size == 0:
            break
        cur = node[active]
        go_left = X[active, f[active]] <= threshold[cur]
        node[active] = np.where(go_left, children_left[cur],
                                children_right[cur])
    out += value[node]


def shap_tree_batch(children_left, children_right, feature, threshold, value,
                    cover, max_depth, X, phi):
    for r in range(X.shape[0]):
        shap_path_row(children_left, children_right, feature, threshold,
                      value, cover, max_depth, X[r], phi[r])
