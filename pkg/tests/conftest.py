import numpy as np
import pytest

from treetrust import kernels
from treetrust.ensemble import (
    FAMILY_GBM,
    FAMILY_RF,
    FAMILY_XGB,
    TASK_REGRESSION,
    Ensemble,
    Tree,
)

_DEFAULT_BACKEND = kernels.get_backend()


@pytest.fixture(params=kernels.available_backends())
def any_backend(request):
    """Run a test once per installed kernel backend."""
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(_DEFAULT_BACKEND)


def make_leaf_tree(value, cover=10.0):
    return Tree(
        children_left=np.array([-1], dtype=np.int64),
        children_right=np.array([-1], dtype=np.int64),
        feature=np.array([-1], dtype=np.int64),
        threshold=np.array([np.nan]),
        value=np.array([float(value)]),
        cover=np.array([float(cover)]),
        gain=np.array([0.0]),
    )


def make_stump(feature, threshold, left_value, right_value,
               left_cover, right_cover, gain=1.0):
    """Single split with two leaves; covers conserve by construction."""
    return Tree(
        children_left=np.array([1, -1, -1], dtype=np.int64),
        children_right=np.array([2, -1, -1], dtype=np.int64),
        feature=np.array([feature, -1, -1], dtype=np.int64),
        threshold=np.array([threshold, np.nan, np.nan]),
        value=np.array([0.0, float(left_value), float(right_value)]),
        cover=np.array([float(left_cover + right_cover),
                        float(left_cover), float(right_cover)]),
        gain=np.array([gain, 0.0, 0.0]),
    )


def random_tree(rng, n_features, max_depth):
    """Random valid tree: integer covers conserve at every split."""
    nodes = []

    def grow(depth, cover):
        idx = len(nodes)
        # [left, right, feature, threshold, value, cover, gain]
        nodes.append([-1, -1, -1, np.nan, 0.0, float(cover), 0.0])
        can_split = depth < max_depth and cover >= 2
        if not can_split or rng.random() < 0.25:
            nodes[idx][4] = float(rng.normal())
            return idx
        nodes[idx][2] = int(rng.integers(n_features))
        nodes[idx][3] = float(rng.random())
        nodes[idx][6] = float(rng.random())
        left_cover = int(rng.integers(1, cover))
        nodes[idx][0] = grow(depth + 1, left_cover)
        nodes[idx][1] = grow(depth + 1, cover - left_cover)
        return idx

    grow(0, int(rng.integers(20, 200)))
    return Tree(
        children_left=np.array([n[0] for n in nodes], dtype=np.int64),
        children_right=np.array([n[1] for n in nodes], dtype=np.int64),
        feature=np.array([n[2] for n in nodes], dtype=np.int64),
        threshold=np.array([n[3] for n in nodes]),
        value=np.array([n[4] for n in nodes]),
        cover=np.array([n[5] for n in nodes]),
        gain=np.array([n[6] for n in nodes]),
    )


def random_ensemble(rng, max_features=12, max_trees=10, max_depth=4):
    n_features = int(rng.integers(1, max_features + 1))
    n_trees = int(rng.integers(1, max_trees + 1))
    depth = int(rng.integers(1, max_depth + 1))
    trees = [random_tree(rng, n_features, depth) for _ in range(n_trees)]
    family = [FAMILY_RF, FAMILY_GBM, FAMILY_XGB][int(rng.integers(3))]
    learning_rate = 1.0 if family == FAMILY_RF else float(rng.uniform(0.05, 1.0))
    base_score = 0.0 if family == FAMILY_RF else float(rng.normal())
    return Ensemble(trees, base_score, learning_rate, family,
                    TASK_REGRESSION, n_features)


def random_row(rng, model):
    """Row in [0, 1); sometimes pinned exactly onto a split threshold."""
    x = rng.random(model.n_features)
    if rng.random() < 0.3:
        tree = model.trees[int(rng.integers(len(model.trees)))]
        internal = np.nonzero(~tree.is_leaf)[0]
        if internal.size:
            j = int(internal[int(rng.integers(internal.size))])
            x[tree.feature[j]] = tree.threshold[j]
    return x
