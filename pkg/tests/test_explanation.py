"""Tests for TreeSHAP, KernelSHAP, the Shapley oracle and the summaries built on them."""

import numpy as np
import pandas as pd
import pytest

from chf_survival.boosting import AftModel, TreeNode, fit, grow_tree
from chf_survival.config import BoostParams
from chf_survival.exceptions import ExplanationError
from chf_survival.explanation import (
    explain_patient,
    exact_shapley,
    global_summary,
    kernel_shap,
    moving_median,
    sample_background,
    shapley_values_from_value_function,
    tree_conditional_expectation,
    tree_shap,
    tree_shap_values,
)
from chf_survival.simulation import CohortGenParams, synth_cohort
from chf_survival.survival_core import SurvivalDataset


def _stump(left_cover=4.0, right_cover=6.0):
    root = TreeNode(weight=0.0, cover=left_cover + right_cover, feature=0, threshold=0.5,
                    left=TreeNode(weight=1.0, cover=left_cover), right=TreeNode(weight=-1.0, cover=right_cover))
    return AftModel(trees=[root], base_score=0.0, sigma=1.0, learning_rate=1.0, feature_names=['a', 'b'])


def _random_ensemble(seed):
    """Up to three depth-2 trees on up to four features, grown on random gradients with missing values."""
    rng = np.random.default_rng(seed)
    n_features = int(rng.integers(1, 5))
    X = rng.uniform(size=(40, n_features))
    X[rng.uniform(size=X.shape) < 0.1] = np.nan
    params = BoostParams(max_depth=int(rng.integers(1, 3)), min_child_weight=0.5)
    trees = [grow_tree(X, rng.normal(size=40), rng.uniform(0.5, 2.0, 40), params=params)
             for _ in range(int(rng.integers(1, 4)))]
    model = AftModel(trees=trees, base_score=float(rng.normal()), sigma=1.0,
                     learning_rate=float(rng.uniform(0.1, 1.0)),
                     feature_names=[f'x{j}' for j in range(n_features)])
    return model, X


@pytest.fixture(scope='module')
def compact_model(small_cohort):
    """Model on six features, small enough for brute-force Shapley enumeration."""
    columns = ['age', 'mean_hr', 'ratio_sd1_sd2', 't_amplitude', 'sex', 'CKD_history']
    data = small_cohort.dataset
    compact = SurvivalDataset(data.features[columns], data.time, data.event, data.record_ids)
    return fit(compact, BoostParams(n_trees=10, max_depth=3, sigma=0.5))


class TestTreeShap:

    def test_stump_closed_form(self):
        explanation = tree_shap(_stump(), {'a': 0.2, 'b': 0.9})
        assert explanation.base_value == pytest.approx(-0.2)
        assert explanation.contributions['a'] == pytest.approx(1.2)
        assert explanation.contributions['b'] == 0.0
        assert explanation.prediction == 1.0
        assert explanation.space == 'log_time'

    def test_missing_value_follows_default_direction(self):
        explanation = tree_shap(_stump(), {'a': np.nan, 'b': 0.9})
        assert explanation.contributions['a'] == pytest.approx(1.2)

    def test_matches_brute_force_shapley(self, compact_model, small_cohort):
        names = compact_model.feature_names
        Xt = compact_model.transform_rows(small_cohort.dataset.features[names].iloc[:5])
        _, phi = tree_shap_values(compact_model, Xt)
        for k in range(Xt.shape[0]):
            expected = shapley_values_from_value_function(
                lambda subset: tree_conditional_expectation(compact_model, Xt[k], subset), len(names))
            np.testing.assert_allclose(phi[k], expected, atol=1e-10)

    @pytest.mark.parametrize('seed', range(50))
    def test_random_ensembles_match_brute_force_shapley(self, seed):
        model, X = _random_ensemble(seed)
        _, phi = tree_shap_values(model, X[:8])
        for k in range(8):
            expected = shapley_values_from_value_function(
                lambda subset: tree_conditional_expectation(model, X[k], subset), X.shape[1])
            np.testing.assert_allclose(phi[k], expected, rtol=0, atol=1e-9)

    def test_local_accuracy(self, toy_model):
        rows = synth_cohort(CohortGenParams(n=1000, seed=17)).dataset.features
        Xt = toy_model.transform_rows(rows)
        base, phi = tree_shap_values(toy_model, Xt)
        np.testing.assert_allclose(base + phi.sum(axis=1), toy_model.raw_predict(Xt), rtol=0, atol=1e-6)
        assert base == pytest.approx(tree_conditional_expectation(toy_model, Xt[0], []))

    @pytest.mark.parametrize('seed', range(5))
    def test_local_accuracy_with_missing_values(self, seed):
        model, _ = _random_ensemble(seed)
        rng = np.random.default_rng(seed + 100)
        X = rng.uniform(size=(1000, len(model.feature_names)))
        X[rng.uniform(size=X.shape) < 0.2] = np.nan
        base, phi = tree_shap_values(model, X)
        np.testing.assert_allclose(base + phi.sum(axis=1), model.raw_predict(X), rtol=0, atol=1e-9)

    def test_requires_node_covers(self):
        with pytest.raises(ExplanationError, match="cover"):
            tree_shap(_stump(left_cover=0.0), {'a': 0.2, 'b': 0.9})

    def test_one_row_only(self, toy_model, small_cohort):
        with pytest.raises(ExplanationError):
            tree_shap(toy_model, small_cohort.dataset.features.iloc[:2])


class TestKernelShap:

    @pytest.fixture
    def linear(self):
        weights = np.array([0.5, -1.0, 2.0, 0.0, 1.5])
        return weights, (lambda X: X @ weights + 3.0)

    def test_exact_for_linear_model(self, linear, rng):
        weights, predict = linear
        background = rng.normal(size=(30, 5))
        row = rng.normal(size=5)
        explanation = kernel_shap(predict, row, background)
        expected = weights * (row - background.mean(axis=0))
        np.testing.assert_allclose(explanation.contributions.to_numpy(), expected, atol=1e-9)
        assert explanation.total == pytest.approx(explanation.prediction)

    def test_sampled_coalitions_recover_linear_model(self, linear, rng):
        weights, predict = linear
        background = rng.normal(size=(30, 5))
        row = rng.normal(size=5)
        explanation = kernel_shap(predict, row, background, n_samples=64, max_exact=3, seed=1)
        np.testing.assert_allclose(explanation.contributions.to_numpy(), weights * (row - background.mean(axis=0)),
                                   atol=1e-9)

    def test_enumeration_equals_exact_shapley(self, rng):
        def predict(X):
            return np.sin(X[:, 0] * X[:, 1]) + X[:, 2] ** 2 * X[:, 3]

        background = rng.normal(size=(10, 4))
        row = rng.normal(size=4)
        explanation = kernel_shap(predict, row, background)
        np.testing.assert_allclose(explanation.contributions.to_numpy(), exact_shapley(predict, row, background),
                                   atol=1e-9)

    def test_efficiency_holds_when_sampling(self, rng):
        def predict(X):
            return np.tanh(X).prod(axis=1)

        background = rng.normal(size=(20, 8))
        row = rng.normal(size=8)
        explanation = kernel_shap(predict, row, background, n_samples=200, max_exact=4, seed=2)
        assert explanation.total == pytest.approx(explanation.prediction, abs=1e-12)
        again = kernel_shap(predict, row, background, n_samples=200, max_exact=4, seed=2)
        pd.testing.assert_series_equal(again.contributions, explanation.contributions)

    def test_single_feature(self):
        explanation = kernel_shap(lambda X: 2.0 * X[:, 0], [3.0], np.array([[1.0], [2.0]]))
        assert explanation.contributions.iloc[0] == pytest.approx(3.0)

    def test_empty_background(self):
        with pytest.raises(ExplanationError, match="empty"):
            kernel_shap(lambda X: X.sum(axis=1), [1.0, 2.0, 3.0], np.empty((0, 3)))

    def test_too_few_coalitions(self, rng):
        with pytest.raises(ExplanationError, match="singular"):
            kernel_shap(lambda X: X.sum(axis=1), rng.normal(size=5), rng.normal(size=(5, 5)),
                        n_samples=2, max_exact=3)

    def test_exact_enumeration_limit(self):
        with pytest.raises(ExplanationError):
            exact_shapley(lambda X: X.sum(axis=1), np.zeros(15), np.zeros((2, 15)))


class TestSummaries:

    def test_moving_median(self):
        np.testing.assert_allclose(moving_median([1, 5, 2, 8, 3], 3), [3.0, 2.0, 5.0, 3.0, 5.5])

    def test_global_summary(self, toy_model, small_cohort):
        rows = small_cohort.dataset.features.iloc[:50]
        summary = global_summary(toy_model, rows, window=201)
        assert summary.window == 50
        assert summary.importance.is_monotonic_decreasing
        assert len(summary.top_features(5)) == 5
        frame = summary.points['t_amplitude']
        assert len(frame) == 50
        assert frame['value'].is_monotonic_increasing
        long = summary.to_long_frame()
        assert len(long) == 50 * len(toy_model.feature_names)
        assert -1.0 <= summary.trend('t_amplitude') <= 1.0

    def test_global_summary_needs_rows(self, toy_model, small_cohort):
        with pytest.raises(ExplanationError):
            global_summary(toy_model, small_cohort.dataset.features.iloc[:0])

    def test_sample_background(self, small_cohort):
        rows = small_cohort.dataset.features
        first = sample_background(rows, size=40, seed=8)
        assert len(first) == 40
        pd.testing.assert_frame_equal(first, sample_background(rows, size=40, seed=8))
        assert len(sample_background(rows.iloc[:10], size=40)) == 10


class TestPatientReport:

    def test_decomposes_event_probability(self, toy_model, small_cohort):
        rows = small_cohort.dataset.features
        background = sample_background(rows, size=30, seed=0)
        row = rows.iloc[7]
        report = explain_patient(toy_model, row, background, horizon=365.0, n_samples=256, seed=0,
                                 record_id=small_cohort.dataset.record_ids[7])

        expected = toy_model.predict_event_probability(row.to_frame().T, 365.0)[0]
        assert report.probability == pytest.approx(expected)
        total = report.base_value + sum(c['contribution'] for c in report.contributions)
        assert total == pytest.approx(report.probability, abs=1e-10)

        magnitudes = [abs(c['contribution']) for c in report.contributions]
        assert magnitudes == sorted(magnitudes, reverse=True)
        by_name = {c['feature']: c for c in report.contributions}
        assert 0.0 <= by_name['age']['percentile'] <= 100.0
        assert by_name['sex']['percentile'] is None
        assert report.to_json_dict()['record_id'] == small_cohort.dataset.record_ids[7]
