import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treetrust.data import DataSet, SyntheticSpec, generate_synthetic
from treetrust.ensemble import (
    FAMILY_GBM,
    FAMILY_RF,
    FAMILY_XGB,
    TASK_CLASSIFICATION,
    TASK_REGRESSION,
    Ensemble,
    HyperParams,
    Tree,
    dumps_model,
    fit,
    loads_model,
    predict,
)
from treetrust.errors import ExplainError, InvalidSpecError
from treetrust.explain import (
    exact_shapley_oracle,
    gain_importance,
    shap_global,
    shap_matrix,
    tree_shap_local,
)

from conftest import make_leaf_tree, make_stump, random_ensemble, random_row


def naive_shapley(model, x):
    """Maximally literal cross-check: per-subset recursive descent plus
    factorial weights, no vectorization, no sharing with the library code."""
    d = model.n_features

    def tree_value(tree, node, subset):
        if tree.children_left[node] < 0:
            return float(tree.value[node])
        f = int(tree.feature[node])
        left = int(tree.children_left[node])
        right = int(tree.children_right[node])
        if f in subset:
            follow = left if x[f] <= tree.threshold[node] else right
            return tree_value(tree, follow, subset)
        wl = tree.cover[left] / tree.cover[node]
        wr = tree.cover[right] / tree.cover[node]
        return (wl * tree_value(tree, left, subset)
                + wr * tree_value(tree, right, subset))

    def subset_value(subset):
        total = sum(tree_value(t, 0, subset) for t in model.trees)
        if model.family == FAMILY_RF:
            return total / len(model.trees)
        return model.base_score + model.learning_rate * total

    phi = np.zeros(d)
    for i in range(d):
        others = [j for j in range(d) if j != i]
        for size in range(d):
            for combo in itertools.combinations(others, size):
                weight = (math.factorial(size) * math.factorial(d - size - 1)
                          / math.factorial(d))
                phi[i] += weight * (subset_value(set(combo) | {i})
                                    - subset_value(set(combo)))
    return phi, subset_value(set())


class TestOracleAndFastPathAgree:
    def test_against_naive_enumeration(self):
        rng = np.random.default_rng(42)
        for _ in range(15):
            model = random_ensemble(rng, max_features=5, max_trees=4,
                                    max_depth=3)
            for _ in range(2):
                x = random_row(rng, model)
                expected_phi, expected_base = naive_shapley(model, x)
                oracle = exact_shapley_oracle(model, x)
                fast = tree_shap_local(model, x)
                assert oracle.phi == pytest.approx(expected_phi, abs=1e-9)
                assert oracle.base == pytest.approx(expected_base, abs=1e-9)
                assert fast.phi == pytest.approx(expected_phi, abs=1e-9)
                assert fast.base == pytest.approx(expected_base, abs=1e-9)

    @given(st.integers(0, 10 ** 9))
    @settings(max_examples=60, deadline=None)
    def test_conformance_random_models(self, seed):
        rng = np.random.default_rng(seed)
        model = random_ensemble(rng, max_features=12, max_trees=10,
                                max_depth=4)
        x = random_row(rng, model)
        oracle = exact_shapley_oracle(model, x)
        fast = tree_shap_local(model, x)
        assert fast.phi == pytest.approx(oracle.phi, abs=1e-9)
        raw = predict(model, x.reshape(1, -1))[0]
        assert oracle.base + oracle.phi.sum() == pytest.approx(raw, abs=1e-9)

    def test_both_backends_agree(self, any_backend):
        rng = np.random.default_rng(7)
        model = random_ensemble(rng, max_features=8, max_trees=6, max_depth=4)
        x = random_row(rng, model)
        fast = tree_shap_local(model, x)
        oracle = exact_shapley_oracle(model, x)
        assert fast.phi == pytest.approx(oracle.phi, abs=1e-9)

    @pytest.mark.parametrize("family,task", [
        (FAMILY_XGB, TASK_CLASSIFICATION),   # fractional hessian covers
        (FAMILY_RF, TASK_CLASSIFICATION),
        (FAMILY_GBM, TASK_REGRESSION)])
    def test_fitted_models_conform(self, family, task):
        data, _ = generate_synthetic(SyntheticSpec(120, 6, seed=19))
        if task == TASK_REGRESSION:
            data = DataSet(data.X, data.X @ np.linspace(-2, 2, 6), data.kinds,
                           TASK_REGRESSION, data.feature_names)
        model = fit(data, HyperParams(n_trees=6, max_depth=4), family, task)
        for row in data.X[:5]:
            fast = tree_shap_local(model, row)
            oracle = exact_shapley_oracle(model, row)
            assert fast.phi == pytest.approx(oracle.phi, abs=1e-9)
            assert fast.base == pytest.approx(oracle.base, abs=1e-9)


class TestLocalAttribution:
    def test_constant_model(self):
        model = Ensemble([make_leaf_tree(1.5)], 0.25, 0.5, FAMILY_GBM,
                         TASK_REGRESSION, 3)
        att = tree_shap_local(model, np.array([0.1, 0.2, 0.3]))
        assert att.phi == pytest.approx(np.zeros(3))
        assert att.base == pytest.approx(0.25 + 0.5 * 1.5)
        oracle = exact_shapley_oracle(model, np.array([0.1, 0.2, 0.3]))
        assert oracle.phi == pytest.approx(np.zeros(3))

    def test_single_split_puts_everything_on_one_feature(self):
        stump = make_stump(1, 0.5, -2.0, 4.0, 30, 10)
        model = Ensemble([stump], 0.0, 1.0, FAMILY_RF, TASK_REGRESSION, 4)
        x = np.array([0.9, 0.2, 0.1, 0.7])     # goes left on feature 1
        att = tree_shap_local(model, x)
        expected_base = (30 * -2.0 + 10 * 4.0) / 40
        raw = predict(model, x.reshape(1, -1))[0]
        assert att.base == pytest.approx(expected_base)
        assert att.phi[1] == pytest.approx(raw - expected_base)
        assert att.phi[[0, 2, 3]] == pytest.approx(np.zeros(3))
        oracle = exact_shapley_oracle(model, x)
        assert oracle.phi == pytest.approx(att.phi, abs=1e-12)

    def test_depth_two_hand_covers(self):
        # 0 root on f0 (covers 12/8), 1 left (splits f1, leaves 2/3),
        # 4 right (splits f1 at a different cut, leaves 5/6)
        tree = Tree(
            children_left=np.array([1, 2, -1, -1, 5, -1, -1], dtype=np.int64),
            children_right=np.array([4, 3, -1, -1, 6, -1, -1], dtype=np.int64),
            feature=np.array([0, 1, -1, -1, 1, -1, -1], dtype=np.int64),
            threshold=np.array([0.5, 0.3, np.nan, np.nan, 0.7, np.nan, np.nan]),
            value=np.array([0, 0, 1.0, -1.0, 0, 2.5, 0.5]),
            cover=np.array([20, 12, 5, 7, 8, 2, 6], dtype=np.float64),
            gain=np.array([3.0, 1.0, 0, 0, 2.0, 0, 0]),
        )
        model = Ensemble([tree], 0.0, 1.0, FAMILY_RF, TASK_REGRESSION, 2)
        for x in ([0.2, 0.2], [0.2, 0.9], [0.9, 0.65], [0.9, 0.71], [0.5, 0.3]):
            x = np.array(x)
            att = tree_shap_local(model, x)
            oracle = exact_shapley_oracle(model, x)
            assert att.phi == pytest.approx(oracle.phi, abs=1e-9)
            assert att.base == pytest.approx(oracle.base, abs=1e-12)

    def test_local_accuracy_fitted_models_and_round_trip(self):
        data, _ = generate_synthetic(SyntheticSpec(150, 6, seed=31))
        reg = DataSet(data.X, data.X @ np.linspace(-3, 3, 6), data.kinds,
                      TASK_REGRESSION, data.feature_names)
        cases = [
            (fit(data, HyperParams(n_trees=10, max_depth=4), FAMILY_XGB,
                 TASK_CLASSIFICATION), data),
            (fit(data, HyperParams(n_trees=10, max_depth=3), FAMILY_RF,
                 TASK_CLASSIFICATION), data),
            (fit(reg, HyperParams(n_trees=10, max_depth=3), FAMILY_GBM,
                 TASK_REGRESSION), reg),
        ]
        for model, used in cases:
            for candidate in (model, loads_model(dumps_model(model))):
                raw = predict(candidate, used.X)
                phi = shap_matrix(candidate, used.X)
                base = tree_shap_local(candidate, used.X[0]).base
                totals = base + phi.sum(axis=1)
                assert np.allclose(totals, raw, rtol=1e-6, atol=1e-12)

    def test_oracle_symmetry_duplicate_features(self):
        # symmetric tree over two features; equal duplicate inputs get equal phi
        tree = Tree(
            children_left=np.array([1, 2, -1, -1, 5, -1, -1], dtype=np.int64),
            children_right=np.array([4, 3, -1, -1, 6, -1, -1], dtype=np.int64),
            feature=np.array([0, 1, -1, -1, 1, -1, -1], dtype=np.int64),
            threshold=np.array([0.5, 0.5, np.nan, np.nan, 0.5, np.nan, np.nan]),
            value=np.array([0, 0, 1.0, 2.0, 0, 2.0, 5.0]),
            cover=np.array([20, 10, 5, 5, 10, 5, 5], dtype=np.float64),
            gain=np.array([1.0, 1.0, 0, 0, 1.0, 0, 0]),
        )
        model = Ensemble([tree], 0.0, 1.0, FAMILY_RF, TASK_REGRESSION, 2)
        for x in ([0.3, 0.3], [0.8, 0.8]):
            oracle = exact_shapley_oracle(model, np.array(x))
            assert oracle.phi[0] == pytest.approx(oracle.phi[1], abs=1e-12)

    def test_missing_covers_instruct_refit(self):
        stump = make_stump(0, 0.5, 1.0, 2.0, 0, 0)
        model = Ensemble([stump], 0.0, 1.0, FAMILY_RF, TASK_REGRESSION, 1)
        with pytest.raises(ExplainError, match="refit"):
            tree_shap_local(model, np.array([0.3]))

    def test_oracle_refuses_wide_models(self):
        model = Ensemble([make_leaf_tree(1.0)], 0.0, 1.0, FAMILY_RF,
                         TASK_REGRESSION, 21)
        with pytest.raises(InvalidSpecError, match="20"):
            exact_shapley_oracle(model, np.zeros(21))


class TestGainImportance:
    def test_single_split_all_mass_on_feature(self):
        stump = make_stump(2, 0.5, 0.0, 1.0, 5, 5, gain=7.0)
        model = Ensemble([stump], 0.0, 1.0, FAMILY_RF, TASK_CLASSIFICATION, 5)
        vec = gain_importance(model, normalize=True)
        assert vec.scores == pytest.approx([0, 0, 1.0, 0, 0])

    def test_two_identical_trees_match_one(self):
        stump = make_stump(1, 0.5, 0.0, 1.0, 5, 5, gain=3.0)
        one = Ensemble([stump], 0.0, 1.0, FAMILY_RF, TASK_CLASSIFICATION, 3)
        two = Ensemble([stump, stump], 0.0, 1.0, FAMILY_RF,
                       TASK_CLASSIFICATION, 3)
        assert np.array_equal(gain_importance(one, normalize=False).scores,
                              gain_importance(two, normalize=False).scores)

    def test_depth_three_matches_independent_walk(self):
        data, _ = generate_synthetic(SyntheticSpec(200, 5, seed=8))
        model = fit(data, HyperParams(n_trees=3, max_depth=3), FAMILY_XGB,
                    TASK_CLASSIFICATION)
        expected = np.zeros(5)
        for tree in model.trees:
            for j in range(tree.n_nodes):
                if tree.children_left[j] >= 0:
                    expected[tree.feature[j]] += tree.gain[j]
        expected /= len(model.trees)
        assert gain_importance(model, normalize=False).scores == \
            pytest.approx(expected, abs=1e-15)

    def test_completeness(self):
        data, _ = generate_synthetic(SyntheticSpec(200, 5, seed=8))
        model = fit(data, HyperParams(n_trees=6, max_depth=4), FAMILY_GBM,
                    TASK_CLASSIFICATION)
        unnormalized = gain_importance(model, normalize=False).scores
        total_decrease = sum(float(t.gain[~t.is_leaf].sum())
                             for t in model.trees) / len(model.trees)
        assert float(unnormalized.sum()) == pytest.approx(total_decrease,
                                                          abs=1e-9)

    def test_stump_only_flagged(self):
        model = Ensemble([make_leaf_tree(1.0)], 0.0, 1.0, FAMILY_RF,
                         TASK_CLASSIFICATION, 2)
        with pytest.warns(UserWarning, match="all-zero"):
            vec = gain_importance(model, normalize=True)
        assert vec.scores == pytest.approx([0.0, 0.0])


class TestShapGlobal:
    def test_constant_model_zero_vector(self):
        model = Ensemble([make_leaf_tree(2.0)], 0.0, 1.0, FAMILY_RF,
                         TASK_REGRESSION, 3)
        vec = shap_global(model, np.random.default_rng(0).random((5, 3)))
        assert vec.scores == pytest.approx(np.zeros(3))

    def test_single_row_is_absolute_phi(self):
        rng = np.random.default_rng(3)
        model = random_ensemble(rng, max_features=4, max_trees=3, max_depth=3)
        x = random_row(rng, model)
        vec = shap_global(model, x.reshape(1, -1))
        att = tree_shap_local(model, x)
        assert vec.scores == pytest.approx(np.abs(att.phi), abs=1e-12)

    def test_matches_external_row_by_row_aggregation(self):
        data, _ = generate_synthetic(SyntheticSpec(50, 4, seed=14))
        model = fit(data, HyperParams(n_trees=5, max_depth=2), FAMILY_XGB,
                    TASK_CLASSIFICATION)
        vec = shap_global(model, data.X)
        acc = np.zeros(4)
        for row in data.X:
            acc += np.abs(tree_shap_local(model, row).phi)
        assert vec.scores == pytest.approx(acc / 50, abs=1e-12)

    def test_empty_matrix_errors(self):
        model = Ensemble([make_leaf_tree(1.0)], 0.0, 1.0, FAMILY_RF,
                         TASK_REGRESSION, 2)
        with pytest.raises(InvalidSpecError):
            shap_global(model, np.empty((0, 2)))
