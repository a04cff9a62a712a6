"""numba-compiled kernels: scalar loops under ``njit``."""

import numpy as np
from numba import njit

from ._kernels_common import MODE_GINI, MODE_VARIANCE, shap_path_row

_shap_path_row = njit(cache=True)(shap_path_row)


@njit(cache=True)
def scan_splits(X, a, b, cols, min_leaf, mode, lam, min_child_b):
    """Best split score and threshold per candidate column.

    X: (n, d) node rows. a/b: per-row statistics whose meaning depends on
    mode (targets for variance, 0/1 classes for gini, gradient/hessian for
    second order). Candidates are midpoints between consecutive distinct
    sorted values; a column with no valid candidate reports -inf.
    min_child_b is a minimum per-child sum of b (hessian mass for the
    second-order mode); pass 0 to disable.
    """
    n = X.shape[0]
    m = cols.shape[0]
    scores = np.full(m, -np.inf)
    thresholds = np.full(m, np.nan)
    ta = 0.0
    tb = 0.0
    for r in range(n):
        ta += a[r]
        tb += b[r]
    for ci in range(m):
        j = cols[ci]
        col = np.empty(n, np.float64)
        for r in range(n):
            col[r] = X[r, j]
        order = np.argsort(col, kind="mergesort")
        best = -np.inf
        best_thr = np.nan
        sa = 0.0
        sb = 0.0
        for i in range(n - 1):
            r = order[i]
            sa += a[r]
            sb += b[r]
            v = col[r]
            vn = col[order[i + 1]]
            if v == vn:
                continue
            nl = i + 1.0
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            if sb < min_child_b or tb - sb < min_child_b:
                continue
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
            if s > best:
                best = s
                t = 0.5 * (v + vn)
                if t >= vn:    # midpoint rounded up to the right value
                    t = v
                best_thr = t
        scores[ci] = best
        thresholds[ci] = best_thr
    return scores, thresholds


@njit(cache=True)
def predict_tree(children_left, children_right, feature, threshold, value,
                 X, out):
    """Add each row's leaf value to ``out``."""
    n = X.shape[0]
    for r in range(n):
        j = 0
        while children_left[j] >= 0:
            if X[r, feature[j]] <= threshold[j]:
                j = children_left[j]
            else:
                j = children_right[j]
        out[r] += value[j]


@njit(cache=True)
def shap_tree_batch(children_left, children_right, feature, threshold, value,
                    cover, max_depth, X, phi):
    """Accumulate per-row Shapley contributions of one tree into phi (n, d)."""
    for r in range(X.shape[0]):
        _shap_path_row(children_left, children_right, feature, threshold,
                       value, cover, max_depth, X[r], phi[r])
