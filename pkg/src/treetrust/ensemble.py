"""Binary decision trees and the three ensemble families.

Trees are stored as flat parallel arrays (child references are node
indices, -1 marking leaves) so the numeric kernels can walk them without
pointer chasing. Every internal node records its split, cover, and impurity
decrease; every leaf records cover and value.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import FitError, InvalidSpecError, ModelIOError, UndefinedMetricError

FAMILY_RF = "rf"
FAMILY_GBM = "gbm"
FAMILY_XGB = "xgb"
FAMILIES = (FAMILY_RF, FAMILY_GBM, FAMILY_XGB)

TASK_CLASSIFICATION = "classification"
TASK_REGRESSION = "regression"
TASKS = (TASK_CLASSIFICATION, TASK_REGRESSION)

TIE_LOWEST_INDEX = "lowest_index"
TIE_SEEDED_RANDOM = "seeded_random"
TIE_BREAKS = (TIE_LOWEST_INDEX, TIE_SEEDED_RANDOM)

# second-order regularization in the xgboost style: leaf shrinkage and the
# minimum child hessian mass below which a split is not considered
XGB_LAMBDA = 1.0
XGB_MIN_CHILD_WEIGHT = 1.0
# splits below this improvement are treated as no improvement
MIN_GAIN = 1e-12

_PROB_EPS = 1e-6


@dataclass(frozen=True)
class HyperParams:
    n_trees: int = 100
    max_depth: int = 6
    min_samples_leaf: int = 1
    learning_rate: float = 0.3
    row_subsample: float = 1.0
    feature_subsample: float = 1.0
    tie_break: str = TIE_LOWEST_INDEX
    seed: int = 0

    def validate(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise InvalidSpecError("counts in hyperparameters must be positive")
        if not 0.0 < self.learning_rate <= 1.0:
            raise InvalidSpecError("learning_rate must lie in (0, 1]")
        for name in ("row_subsample", "feature_subsample"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise InvalidSpecError(f"{name} must lie in (0, 1]")
        if self.tie_break not in TIE_BREAKS:
            raise InvalidSpecError(f"unknown tie_break {self.tie_break!r}")


def default_params(family):
    """Reference-flavored defaults: the deterministic booster keeps its
    library defaults; the sklearn-style families get theirs, including the
    seed-sensitive tie policy their implementations exhibit."""
    if family == FAMILY_XGB:
        return HyperParams()
    if family == FAMILY_GBM:
        return HyperParams(max_depth=3, learning_rate=0.1,
                           tie_break=TIE_SEEDED_RANDOM)
    if family == FAMILY_RF:
        return HyperParams(max_depth=8, tie_break=TIE_SEEDED_RANDOM)
    raise InvalidSpecError(f"unknown family {family!r}")


@dataclass
class Tree:
    """One fitted binary tree as flat node arrays (preorder ids)."""

    children_left: np.ndarray
    children_right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self):
        return self.children_left.shape[0]

    @property
    def is_leaf(self):
        return self.children_left < 0

    def max_depth(self):
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for j in range(self.n_nodes):
            if self.children_left[j] >= 0:
                depth[self.children_left[j]] = depth[j] + 1
                depth[self.children_right[j]] = depth[j] + 1
        return int(depth.max())

    def expected_value(self):
        """Cover-weighted mean output; covers telescope to leaf shares."""
        leaves = self.is_leaf
        return float(np.sum(self.value[leaves] * self.cover[leaves])
                     / self.cover[0])

    def predict_into(self, X, out):
        kernels.predict_tree(self.children_left, self.children_right,
                             self.feature, self.threshold, self.value, X, out)


@dataclass
class Ensemble:
    trees: list
    base_score: float
    learning_rate: float
    family: str
    task: str
    n_features: int


class _TreeBuilder:
    """Greedy CART growth over one (sub)sample.

    ``cover_weight`` defines the per-row mass recorded as node cover (ones
    for count semantics, hessians for the second-order family). Internal
    covers are summed bottom-up from the children so conservation is exact.
    """

    def __init__(self, X, split_a, split_b, leaf_num, leaf_den, cover_weight,
                 split_mode, leaf_lambda, params, cols, rng,
                 min_child_b=0.0):
        self.X = X
        self.split_a = split_a
        self.split_b = split_b
        self.leaf_num = leaf_num
        self.leaf_den = leaf_den
        self.cover_weight = cover_weight
        self.split_mode = split_mode
        self.leaf_lambda = leaf_lambda
        self.params = params
        self.cols = cols
        self.rng = rng
        self.min_child_b = min_child_b
        self.nodes = []   # [left, right, feature, threshold, value, cover, gain]

    def build(self):
        rows = np.arange(self.X.shape[0], dtype=np.int64)
        self._grow(rows, 0)
        n = len(self.nodes)
        return Tree(
            children_left=np.array([r[0] for r in self.nodes], dtype=np.int64),
            children_right=np.array([r[1] for r in self.nodes], dtype=np.int64),
            feature=np.array([r[2] for r in self.nodes], dtype=np.int64),
            threshold=np.array([r[3] for r in self.nodes], dtype=np.float64),
            value=np.array([r[4] for r in self.nodes], dtype=np.float64),
            cover=np.array([r[5] for r in self.nodes], dtype=np.float64),
            gain=np.array([r[6] for r in self.nodes], dtype=np.float64),
        )

    def _leaf_value(self, rows):
        num = float(np.sum(self.leaf_num[rows]))
        den = float(np.sum(self.leaf_den[rows])) + self.leaf_lambda
        if den <= 0.0:
            den = 1e-12
        return num / den

    def _make_leaf(self, idx, rows):
        self.nodes[idx][4] = self._leaf_value(rows)
        self.nodes[idx][5] = float(np.sum(self.cover_weight[rows]))

    def _grow(self, rows, depth):
        idx = len(self.nodes)
        self.nodes.append([-1, -1, -1, math.nan, 0.0, 0.0, 0.0])

        params = self.params
        if depth >= params.max_depth or rows.shape[0] < 2 * params.min_samples_leaf:
            self._make_leaf(idx, rows)
            return idx

        scores, thresholds = kernels.scan_splits(
            self.X[rows], self.split_a[rows], self.split_b[rows], self.cols,
            params.min_samples_leaf, self.split_mode,
            self.leaf_lambda
            if self.split_mode == kernels.MODE_SECOND_ORDER else 0.0,
            self.min_child_b)
        best = float(np.max(scores))
        if not math.isfinite(best) or best <= MIN_GAIN:
            self._make_leaf(idx, rows)
            return idx

        tied = np.nonzero(scores == best)[0]
        if tied.shape[0] > 1 and params.tie_break == TIE_SEEDED_RANDOM:
            ci = int(tied[self.rng.integers(tied.shape[0])])
        else:
            ci = int(tied[0])   # cols are ascending, so this is lowest index
        feat = int(self.cols[ci])
        thr = float(thresholds[ci])

        mask = self.X[rows, feat] <= thr
        left_rows = rows[mask]
        right_rows = rows[~mask]
        if left_rows.shape[0] == 0 or right_rows.shape[0] == 0:
            self._make_leaf(idx, rows)
            return idx

        self.nodes[idx][2] = feat
        self.nodes[idx][3] = thr
        self.nodes[idx][6] = best
        left = self._grow(left_rows, depth + 1)
        right = self._grow(right_rows, depth + 1)
        self.nodes[idx][0] = left
        self.nodes[idx][1] = right
        self.nodes[idx][5] = self.nodes[left][5] + self.nodes[right][5]
        return idx


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _log_odds(p):
    p = min(max(p, _PROB_EPS), 1.0 - _PROB_EPS)
    return math.log(p / (1.0 - p))


def fit(data, params, family, task):
    """Train one ensemble.

    Random forests bootstrap rows per tree; gradient boosting fits residuals
    with variance-reduction splits; the second-order family uses the
    gradient/hessian split score and leaf values of logistic or squared loss.
    """
    params.validate()
    if family not in FAMILIES:
        raise InvalidSpecError(f"unknown family {family!r}")
    if task not in TASKS:
        raise InvalidSpecError(f"unknown task {task!r}")
    X = np.ascontiguousarray(data.X, dtype=np.float64)
    y = np.asarray(data.y, dtype=np.float64)
    n, d = X.shape
    if d < 1:
        raise FitError("no usable features")
    if n < 2:
        raise FitError("need at least 2 samples")
    if task == TASK_CLASSIFICATION and not set(np.unique(y)) <= {0.0, 1.0}:
        raise FitError("classification targets must be 0/1")

    rng = np.random.default_rng(params.seed)
    all_cols = np.arange(d, dtype=np.int64)
    m_feats = max(1, int(round(params.feature_subsample * d)))

    def tree_cols():
        if m_feats >= d:
            return all_cols
        return np.sort(rng.choice(d, size=m_feats, replace=False)).astype(np.int64)

    trees = []
    if family == FAMILY_RF:
        base = 0.0
        mode = (kernels.MODE_GINI if task == TASK_CLASSIFICATION
                else kernels.MODE_VARIANCE)
        for _ in range(params.n_trees):
            rows = rng.integers(0, n, size=n)
            cols = tree_cols()
            Xs = np.ascontiguousarray(X[rows])
            ys = y[rows]
            ones = np.ones(rows.shape[0])
            builder = _TreeBuilder(Xs, ys, ones, ys, ones, ones, mode, 0.0,
                                   params, cols, rng)
            trees.append(builder.build())
        return Ensemble(trees, base, 1.0, family, task, d)

    # boosting families share the margin loop
    if task == TASK_CLASSIFICATION:
        base = _log_odds(float(np.mean(y)))
    else:
        base = float(np.mean(y))
    margins = np.full(n, base)
    m_rows = max(2, int(round(params.row_subsample * n)))
    for _ in range(params.n_trees):
        if m_rows >= n:
            rows = np.arange(n, dtype=np.int64)
        else:
            rows = np.sort(rng.permutation(n)[:m_rows]).astype(np.int64)
        cols = tree_cols()
        if task == TASK_CLASSIFICATION:
            p = _sigmoid(margins)
            residual = y - p
            hess = p * (1.0 - p)
        else:
            residual = y - margins
            hess = np.ones(n)
        Xs = np.ascontiguousarray(X[rows])
        ones = np.ones(rows.shape[0])
        if family == FAMILY_GBM:
            builder = _TreeBuilder(
                Xs, residual[rows], ones, residual[rows],
                hess[rows] if task == TASK_CLASSIFICATION else ones,
                ones, kernels.MODE_VARIANCE,
                1e-12 if task == TASK_CLASSIFICATION else 0.0,
                params, cols, rng)
        else:
            # covers carry hessian mass, mirroring the reference booster
            grad = -residual
            builder = _TreeBuilder(
                Xs, grad[rows], hess[rows], residual[rows], hess[rows],
                hess[rows], kernels.MODE_SECOND_ORDER, XGB_LAMBDA,
                params, cols, rng, min_child_b=XGB_MIN_CHILD_WEIGHT)
        tree = builder.build()
        trees.append(tree)
        update = np.zeros(n)
        tree.predict_into(X, update)
        margins += params.learning_rate * update
    return Ensemble(trees, base, params.learning_rate, family, task, d)


def predict(model, X, n_trees=None):
    """Raw predictions: probability-like for forests, margin for boosting."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise InvalidSpecError(
            f"input has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model expects {model.n_features}")
    trees = model.trees if n_trees is None else model.trees[:n_trees]
    out = np.zeros(X.shape[0])
    for tree in trees:
        tree.predict_into(X, out)
    if model.family == FAMILY_RF:
        return out / len(trees)
    return model.base_score + model.learning_rate * out


def predict_proba(model, X, n_trees=None):
    if model.task != TASK_CLASSIFICATION:
        raise InvalidSpecError("probabilities only defined for classification")
    raw = predict(model, X, n_trees=n_trees)
    if model.family == FAMILY_RF:
        return np.clip(raw, 0.0, 1.0)
    return _sigmoid(raw)


def training_loss(model, X, y, n_trees=None):
    """Mean squared error or logistic loss of raw predictions on (X, y)."""
    raw = predict(model, X, n_trees=n_trees)
    if model.task == TASK_CLASSIFICATION:
        if model.family == FAMILY_RF:
            p = np.clip(raw, 1e-12, 1.0 - 1e-12)
        else:
            p = np.clip(_sigmoid(raw), 1e-12, 1.0 - 1e-12)
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    return float(np.mean((y - raw) ** 2))


def auroc(scores, labels):
    """Rank-based AUROC with midrank tie handling."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape:
        raise InvalidSpecError("scores and labels must have equal length")
    n_pos = int(np.sum(labels == 1.0))
    n_neg = int(np.sum(labels == 0.0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.shape[0])
    i = 0
    while i < scores.shape[0]:
        j = i
        while j + 1 < scores.shape[0] and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(np.sum(ranks[labels == 1.0]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class SearchSpace:
    """Inclusive ranges for uniform random hyperparameter search."""

    n_trees: tuple = (20, 300)
    max_depth: tuple = (2, 8)
    learning_rate: tuple = (0.01, 0.3)     # sampled log-uniformly
    min_samples_leaf: tuple = (1, 20)
    row_subsample: tuple = (0.6, 1.0)
    feature_subsample: tuple = (0.6, 1.0)
    tie_break: str = TIE_LOWEST_INDEX


def random_search(data, space, budget, seed, family, task, n_folds=3):
    """Uniform random search scored by k-fold cross-validated loss.

    Samples ``budget`` configurations from ``space``, scores each with the
    same fold layout, and returns the best; ties go to the earliest sample.
    """
    if budget < 1:
        raise InvalidSpecError("search budget must be at least 1")
    rng = np.random.default_rng(seed)
    n = data.n_samples
    folds = max(2, min(n_folds, n))
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    for f in range(folds):
        fold_of[perm[f::folds]] = f

    best_params = None
    best_loss = math.inf
    for _ in range(budget):
        candidate = HyperParams(
            n_trees=int(rng.integers(space.n_trees[0], space.n_trees[1] + 1)),
            max_depth=int(rng.integers(space.max_depth[0], space.max_depth[1] + 1)),
            min_samples_leaf=int(rng.integers(space.min_samples_leaf[0],
                                              space.min_samples_leaf[1] + 1)),
            learning_rate=float(np.exp(rng.uniform(
                math.log(space.learning_rate[0]),
                math.log(space.learning_rate[1])))),
            row_subsample=float(rng.uniform(*space.row_subsample)),
            feature_subsample=float(rng.uniform(*space.feature_subsample)),
            tie_break=space.tie_break,
            seed=int(rng.integers(2 ** 31)),
        )
        loss = cv_loss(data, candidate, family, task, fold_of)
        if loss < best_loss:
            best_loss = loss
            best_params = candidate
    return best_params


def cv_loss(data, params, family, task, fold_of):
    """Mean held-fold loss (log-loss or squared error) for one candidate."""
    losses = []
    for f in range(int(fold_of.max()) + 1):
        hold = fold_of == f
        train = data.subset(~hold)
        model = fit(train, params, family, task)
        raw = predict(model, data.X[hold])
        y = data.y[hold]
        if task == TASK_CLASSIFICATION:
            if family == FAMILY_RF:
                p = np.clip(raw, 1e-12, 1.0 - 1e-12)
            else:
                p = np.clip(_sigmoid(raw), 1e-12, 1.0 - 1e-12)
            losses.append(float(-np.mean(
                y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))
        else:
            losses.append(float(np.mean((y - raw) ** 2)))
    return float(np.mean(losses))


# --- model text format ------------------------------------------------------
#
# One node per line: id, parent, side, feature, threshold, leaf_value, cover,
# impurity decrease; nan marks fields a node kind does not carry. Floats are
# written with repr so a round-trip is bit-exact.

_MAGIC = "treetrust-ensemble v1"


def dumps_model(model):
    lines = [_MAGIC]
    lines.append(
        f"family={model.family} task={model.task} "
        f"n_features={model.n_features} n_trees={len(model.trees)} "
        f"base_score={model.base_score!r} learning_rate={model.learning_rate!r}")
    for t, tree in enumerate(model.trees):
        lines.append(f"tree {t} n_nodes={tree.n_nodes}")
        parent = np.full(tree.n_nodes, -1, dtype=np.int64)
        side = ["root"] * tree.n_nodes
        for j in range(tree.n_nodes):
            if tree.children_left[j] >= 0:
                parent[tree.children_left[j]] = j
                side[tree.children_left[j]] = "left"
                parent[tree.children_right[j]] = j
                side[tree.children_right[j]] = "right"
        for j in range(tree.n_nodes):
            is_leaf = tree.children_left[j] < 0
            feat = -1 if is_leaf else int(tree.feature[j])
            thr = math.nan if is_leaf else float(tree.threshold[j])
            val = float(tree.value[j]) if is_leaf else math.nan
            gain = math.nan if is_leaf else float(tree.gain[j])
            lines.append(
                f"{j} {parent[j]} {side[j]} {feat} {thr!r} {val!r} "
                f"{float(tree.cover[j])!r} {gain!r}")
    return "\n".join(lines) + "\n"


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps_model(model))


def loads_model(text):
    lines = text.splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ModelIOError("not a treetrust model file")
    try:
        header = dict(item.split("=", 1) for item in lines[1].split())
        family = header["family"]
        task = header["task"]
        n_features = int(header["n_features"])
        n_trees = int(header["n_trees"])
        base_score = float(header["base_score"])
        learning_rate = float(header["learning_rate"])
    except (IndexError, KeyError, ValueError) as exc:
        raise ModelIOError(f"bad model header: {exc}") from None

    trees = []
    pos = 2
    for t in range(n_trees):
        if pos >= len(lines) or not lines[pos].startswith("tree "):
            raise ModelIOError(f"expected tree {t} header at line {pos + 1}")
        try:
            n_nodes = int(lines[pos].split("n_nodes=")[1])
        except (IndexError, ValueError):
            raise ModelIOError(f"bad tree header: {lines[pos]!r}") from None
        pos += 1
        cl = np.full(n_nodes, -1, dtype=np.int64)
        cr = np.full(n_nodes, -1, dtype=np.int64)
        feature = np.full(n_nodes, -1, dtype=np.int64)
        threshold = np.full(n_nodes, math.nan)
        value = np.zeros(n_nodes)
        cover = np.zeros(n_nodes)
        gain = np.zeros(n_nodes)
        for k in range(n_nodes):
            try:
                (node_id, parent, side, feat, thr, val, cov, g) = \
                    lines[pos + k].split()
                j = int(node_id)
                parent = int(parent)
                feat = int(feat)
            except (IndexError, ValueError) as exc:
                raise ModelIOError(
                    f"bad node line {pos + k + 1}: {exc}") from None
            if j != k:
                raise ModelIOError(f"node ids out of order at line {pos + k + 1}")
            feature[j] = feat
            threshold[j] = float(thr)
            if feat < 0:
                value[j] = float(val)
            cover[j] = float(cov)
            g = float(g)
            gain[j] = 0.0 if math.isnan(g) else g
            if parent >= 0:
                if side == "left":
                    cl[parent] = j
                elif side == "right":
                    cr[parent] = j
                else:
                    raise ModelIOError(f"bad side {side!r} at line {pos + k + 1}")
        pos += n_nodes
        for j in range(n_nodes):
            if feature[j] >= 0 and (cl[j] < 0 or cr[j] < 0):
                raise ModelIOError(f"split node {j} is missing children")
        trees.append(Tree(cl, cr, feature, threshold, value, cover, gain))
    return Ensemble(trees, base_score, learning_rate, family, task, n_features)


def load_model(path):
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ModelIOError(f"cannot open {path}: {exc}") from None
    return loads_model(text)
