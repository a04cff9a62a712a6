"""Gain and Tree SHAP global importances, plus an exact Shapley oracle.

All attributions are in raw-output units (margins for boosted classifiers),
so additivity holds exactly: base + sum(phi) equals the raw prediction.
"""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .ensemble import FAMILY_RF
from .errors import ExplainError, InvalidSpecError

METHOD_GAIN = "gain"
METHOD_TREE_SHAP = "tree_shap"

ORACLE_MAX_FEATURES = 20


@dataclass(frozen=True)
class ImportanceVector:
    """Per-feature global importance scores from one method."""

    scores: np.ndarray
    method: str
    normalized: bool


@dataclass(frozen=True)
class LocalAttribution:
    """Per-feature contributions for one row; base is the expected output."""

    phi: np.ndarray
    base: float

    @property
    def total(self):
        return self.base + float(np.sum(self.phi))


def gain_importance(model, normalize=True):
    """Per-feature impurity decrease, averaged across trees."""
    total = np.zeros(model.n_features)
    for tree in model.trees:
        internal = ~tree.is_leaf
        np.add.at(total, tree.feature[internal], tree.gain[internal])
    total /= len(model.trees)
    mass = float(np.sum(total))
    if normalize:
        if mass > 0.0:
            total = total / mass
        else:
            warnings.warn("all-zero gain vector (no splits in any tree); "
                          "normalization skipped", stacklevel=2)
    return ImportanceVector(total, METHOD_GAIN, normalize)


def _check_covers(model):
    for tree in model.trees:
        if tree.cover[0] <= 0.0 or np.any(tree.cover[~tree.is_leaf] <= 0.0):
            raise ExplainError(
                "model lacks positive cover statistics; refit (or reload a "
                "model saved with covers) before computing SHAP values")


def _ensemble_scale(model):
    if model.family == FAMILY_RF:
        return 1.0 / len(model.trees)
    return model.learning_rate


def _ensemble_base(model):
    scale = _ensemble_scale(model)
    base = sum(tree.expected_value() for tree in model.trees) * scale
    if model.family != FAMILY_RF:
        base += model.base_score
    return base


def shap_matrix(model, X):
    """Path-dependent local attributions for every row; shape (n, d)."""
    _check_covers(model)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise InvalidSpecError("input columns do not match model features")
    phi = np.zeros((X.shape[0], model.n_features))
    for tree in model.trees:
        kernels.shap_tree_batch(tree.children_left, tree.children_right,
                                tree.feature, tree.threshold, tree.value,
                                tree.cover, tree.max_depth(), X, phi)
    phi *= _ensemble_scale(model)
    return phi


def tree_shap_local(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.n_features:
        raise InvalidSpecError("row length does not match model features")
    phi = shap_matrix(model, x.reshape(1, -1))[0]
    return LocalAttribution(phi, _ensemble_base(model))


def shap_global(model, X):
    """Mean absolute local attribution per feature over all rows of X."""
    X = np.asarray(X)
    if X.size == 0:
        raise InvalidSpecError("cannot aggregate SHAP over an empty matrix")
    phi = shap_matrix(model, X)
    return ImportanceVector(np.mean(np.abs(phi), axis=0), METHOD_TREE_SHAP,
                            False)


def _subset_values_tree(tree, x, n_subsets, subset_ids):
    """Cover-weighted conditional expectation of one tree for every subset.

    Recursive descent per the definition: at a node whose split feature is in
    the subset, follow the row; otherwise average both children weighted by
    cover. Evaluated for all subsets at once (vector over subset bitmasks).
    """
    def descend(j):
        if tree.children_left[j] < 0:
            return np.full(n_subsets, tree.value[j])
        f = int(tree.feature[j])
        left = descend(tree.children_left[j])
        right = descend(tree.children_right[j])
        followed = left if x[f] <= tree.threshold[j] else right
        wl = tree.cover[tree.children_left[j]] / tree.cover[j]
        wr = tree.cover[tree.children_right[j]] / tree.cover[j]
        has_f = (subset_ids & (1 << f)) != 0
        return np.where(has_f, followed, wl * left + wr * right)

    return descend(0)


def exact_shapley_oracle(model, x):
    """Ground-truth Shapley attribution by full subset enumeration.

    For every subset S of features, f_S(x) is the path-dependent conditional
    expectation; values are combined with the exact factorial weights
    |S|! (|F|-|S|-1)! / |F|!. Refuses more than 20 features.
    """
    _check_covers(model)
    x = np.asarray(x, dtype=np.float64)
    d = model.n_features
    if x.ndim != 1 or x.shape[0] != d:
        raise InvalidSpecError("row length does not match model features")
    if d > ORACLE_MAX_FEATURES:
        raise InvalidSpecError(
            f"oracle enumeration refuses more than {ORACLE_MAX_FEATURES} "
            f"features (got {d})")

    n_subsets = 1 << d
    subset_ids = np.arange(n_subsets, dtype=np.int64)
    values = np.zeros(n_subsets)
    for tree in model.trees:
        values += _subset_values_tree(tree, x, n_subsets, subset_ids)
    values *= _ensemble_scale(model)
    if model.family != FAMILY_RF:
        values += model.base_score

    sizes = np.zeros(n_subsets, dtype=np.int64)
    for b in range(d):
        sizes += (subset_ids >> b) & 1
    fact = [math.factorial(k) for k in range(d + 1)]
    weight_by_size = np.array(
        [fact[s] * fact[d - s - 1] / fact[d] for s in range(d)])

    phi = np.zeros(d)
    for i in range(d):
        bit = 1 << i
        without = subset_ids[(subset_ids & bit) == 0]
        w = weight_by_size[sizes[without]]
        phi[i] = float(np.sum(w * (values[without | bit] - values[without])))
    return LocalAttribution(phi, float(values[0]))


def write_importance_csv(path, vectors, feature_names):
    """Serialize importance vectors: feature_index, feature_name, method, score."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["feature_index", "feature_name", "method", "score"])
        for vec in vectors:
            for j, score in enumerate(vec.scores):
                writer.writerow([j, feature_names[j], vec.method,
                                 repr(float(score))])
