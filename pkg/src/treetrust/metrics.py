"""Rank-based accuracy and stability statistics.

Undefined correlations (constant inputs) are returned as NaN so callers can
report them as missing rather than imputing a value.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError

CATEGORY_CORRECT = "correct"
CATEGORY_TOP = "incorrect_but_top"
CATEGORY_INCORRECT = "incorrect"
CATEGORIES = (CATEGORY_CORRECT, CATEGORY_TOP, CATEGORY_INCORRECT)


@dataclass(frozen=True)
class CorrelationPair:
    spearman: float
    pearson: float

    @property
    def defined(self):
        return not (math.isnan(self.spearman) or math.isnan(self.pearson))


@dataclass(frozen=True)
class RankOutcome:
    """Outcome for the feature whose true rank is the list position.

    ``rank_position`` is the feature's 1-based rank under the estimated
    scores, so the category is recomputable from (true rank, rank_position, k).
    """

    category: str
    rank_position: int


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape[0] != b.shape[0]:
        raise InvalidSpecError("inputs must be equal-length vectors")
    if a.shape[0] < 2:
        raise InvalidSpecError("correlation needs at least 2 points")
    return a, b


def pearson(a, b):
    """Product-moment correlation; NaN when either input is constant."""
    a, b = _check_pair(a, b)
    da = a - np.mean(a)
    db = b - np.mean(b)
    va = float(np.sum(da * da))
    vb = float(np.sum(db * db))
    if va == 0.0 or vb == 0.0:
        return math.nan
    return float(np.sum(da * db)) / math.sqrt(va * vb)


def midranks(v):
    """1-based ranks with ties assigned the average of their positions."""
    v = np.asarray(v, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(v.shape[0])
    i = 0
    while i < v.shape[0]:
        j = i
        while j + 1 < v.shape[0] and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(a, b):
    """Pearson correlation of midrank-transformed vectors."""
    a, b = _check_pair(a, b)
    return pearson(midranks(a), midranks(b))


def correlation_pair(a, b):
    return CorrelationPair(spearman(a, b), pearson(a, b))


def rank_descending(scores):
    """Feature ids ordered by decreasing |score|, ties to the lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.shape[0]), -np.abs(scores)))


def topk_rank_accuracy(true_scores, estimated_scores, k):
    """Categorize the top-k true features under the estimated ranking."""
    true_scores = np.asarray(true_scores, dtype=np.float64)
    estimated_scores = np.asarray(estimated_scores, dtype=np.float64)
    d = true_scores.shape[0]
    if estimated_scores.shape[0] != d:
        raise InvalidSpecError("score vectors must have equal length")
    if k < 1 or k > d:
        raise InvalidSpecError(f"k must lie in [1, {d}], got {k}")
    true_order = rank_descending(true_scores)
    est_order = rank_descending(estimated_scores)
    est_rank_of = np.empty(d, dtype=np.int64)
    est_rank_of[est_order] = np.arange(1, d + 1)

    outcomes = []
    for r in range(1, k + 1):
        feat = int(true_order[r - 1])
        er = int(est_rank_of[feat])
        if er == r:
            category = CATEGORY_CORRECT
        elif er <= k:
            category = CATEGORY_TOP
        else:
            category = CATEGORY_INCORRECT
        outcomes.append(RankOutcome(category, er))
    return outcomes


def has_ties(scores):
    """True when any two |scores| coincide (rank order then depends on index)."""
    mags = np.abs(np.asarray(scores, dtype=np.float64))
    return bool(np.unique(mags).shape[0] < mags.shape[0])
