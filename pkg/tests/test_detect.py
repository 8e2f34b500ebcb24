import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcnads.detect import (
    DecisionTree,
    DivergenceScores,
    Leaf,
    divergence_scores,
    gini,
    split_calibration_evaluation,
    tree_fit,
    tree_predict,
)
from tcnads.errors import ShapeError, ValidationError
from tcnads.ingest import SignalSeries
from tcnads.tcna import TcnaConfig, TcnaModel


class TestGini:
    @pytest.mark.parametrize("counts,expected", [((5, 5), 0.5), ((10, 0), 0.0), ((0, 3), 0.0), ((1, 3), 0.375), ((0, 0), 0.0)])
    def test_values(self, counts, expected):
        assert gini(counts) == pytest.approx(expected, abs=1e-15)


class TestLeaf:
    def test_majority_and_tie(self):
        assert Leaf((3, 1)).label == 0
        assert Leaf((1, 3)).label == 1
        assert Leaf((2, 2)).label == 1

    def test_probability(self):
        assert Leaf((3, 1)).probability == 0.25


def xor_data(n_per=10, seed=0):
    rng = np.random.default_rng(seed)
    X, y = [], []
    for a, b in itertools.product((0, 1), repeat=2):
        X.append(np.column_stack([a + rng.uniform(-0.2, 0.2, n_per), b + rng.uniform(-0.2, 0.2, n_per)]))
        y += [a ^ b] * n_per
    return np.vstack(X), np.array(y)


def best_stump_accuracy(X, y):
    """Exhaustive depth-1 search over every feature and midpoint."""
    best = 0.0
    for f in range(X.shape[1]):
        xs = np.unique(X[:, f])
        for thr in np.r_[xs[0] - 1, (xs[:-1] + xs[1:]) / 2]:
            left = X[:, f] <= thr
            correct = 0
            for side in (left, ~left):
                if side.any():
                    correct += max(np.sum(y[side] == 0), np.sum(y[side] == 1))
            best = max(best, correct / len(y))
    return best


class TestTree:
    def test_separable_one_split(self):
        X = np.array([[0.1], [0.2], [0.3], [0.7], [0.8], [0.9]])
        y = np.array([0, 0, 0, 1, 1, 1])
        tree = DecisionTree.fit(X, y)
        assert tree.depth == 1 and tree.n_leaves == 2
        assert tree.root.threshold == pytest.approx(0.5)
        assert np.array_equal(tree.predict(X), y)

    def test_xor_needs_depth_two(self):
        X, y = xor_data()
        assert best_stump_accuracy(X, y) < 1.0
        stump = DecisionTree.fit(X, y, max_depth=1)
        assert np.mean(stump.predict(X) == y) < 1.0
        tree = DecisionTree.fit(X, y)
        assert tree.depth >= 2
        assert np.array_equal(tree.predict(X), y)

    def test_exact_xor_corners_depth_two(self):
        X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] * 3)
        y = np.array([0, 1, 1, 0] * 3)
        tree = DecisionTree.fit(X, y)
        assert tree.depth == 2
        assert np.array_equal(tree.predict(X), y)

    def test_single_class_is_leaf(self):
        tree = DecisionTree.fit(np.random.default_rng(0).normal(size=(20, 2)), np.zeros(20, dtype=int))
        assert isinstance(tree.root, Leaf) and tree.root.counts == (20, 0)
        assert tree.predict(np.zeros((3, 2))).tolist() == [0, 0, 0]

    def test_unsplittable_duplicates(self):
        tree = DecisionTree.fit(np.ones((4, 1)), np.array([0, 1, 0, 1]))
        assert isinstance(tree.root, Leaf) and tree.predict([[1.0]]).tolist() == [1]

    def test_deterministic(self):
        X, y = xor_data(seed=3)
        assert DecisionTree.fit(X, y).to_json() == DecisionTree.fit(X, y).to_json()

    def test_tie_prefers_lowest_feature(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0]])
        tree = DecisionTree.fit(X, np.array([0, 1]))
        assert tree.root.feature == 0

    def test_json_round_trip(self, tmp_path):
        X, y = xor_data(seed=5)
        tree = DecisionTree.fit(X, y)
        tree.save(tmp_path / "t.json")
        loaded = DecisionTree.load(tmp_path / "t.json")
        probe = np.random.default_rng(5).uniform(-0.5, 1.5, size=(200, 2))
        assert np.array_equal(tree.predict(probe), loaded.predict(probe))
        assert np.array_equal(tree.predict_proba(probe), loaded.predict_proba(probe))
        assert loaded.to_json() == tree.to_json()

    def test_feature_count_checked(self):
        tree = DecisionTree.fit(np.array([[0.0], [1.0]]), np.array([0, 1]))
        with pytest.raises(ShapeError):
            tree.predict(np.zeros((1, 2)))

    def test_deep_chain_no_recursion_limit(self):
        # alternating labels force one split per point
        n = 3000
        X = np.arange(n, dtype=float)[:, None]
        y = np.arange(n) % 2
        tree = DecisionTree.fit(X, y)
        assert np.array_equal(tree.predict(X), y)
        assert DecisionTree.from_json(tree.to_json()).n_leaves == tree.n_leaves

    @given(st.integers(0, 10**6))
    @settings(max_examples=30, deadline=None)
    def test_unbounded_tree_fits_distinct_points(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(40, 3))
        y = rng.integers(0, 2, size=40)
        assert np.array_equal(DecisionTree.fit(X, y).predict(X), y)

    def test_predict_one(self):
        tree = DecisionTree.fit(np.array([[0.0], [1.0], [1.1]]), np.array([0, 1, 1]))
        assert tree_predict(tree, np.array([2.0])) == (1, 1.0)
        assert tree.predict_one([-1.0]) == (0, 0.0)


def scores(n=200, pos=()):
    labels = np.zeros(n, dtype=np.int64)
    labels[list(pos)] = 1
    return DivergenceScores("a", np.arange(n), np.arange(n, dtype=float)[:, None], labels)


class TestDivergence:
    def test_values_are_prediction_minus_next(self):
        model = TcnaModel.zeros(TcnaConfig.for_receptive_field(1, 8))
        model.params["linear.bias"][:] = 0.5
        values = np.linspace(0, 1, 12)[:, None]
        ds = divergence_scores(model, SignalSeries("a", np.arange(12), values, np.zeros(12)))
        assert ds.index.tolist() == [8, 9, 10, 11]
        np.testing.assert_allclose(ds.scores[:, 0], 0.5 - values[8:, 0], rtol=0, atol=1e-15)

    def test_perfect_predictor_scores_zero(self):
        model = TcnaModel.zeros(TcnaConfig.for_receptive_field(2, 8))
        model.params["linear.bias"][:] = [0.3, 0.7]
        values = np.tile([0.3, 0.7], (20, 1))
        ds = divergence_scores(model, SignalSeries("a", np.arange(20), values, np.zeros(20)))
        assert np.all(ds.scores == 0)

    def test_labels_follow_judged_message(self):
        model = TcnaModel.zeros(TcnaConfig.for_receptive_field(1, 8))
        labels = np.zeros(12, dtype=np.int64)
        labels[9] = 1
        ds = divergence_scores(model, SignalSeries("a", np.arange(12), np.zeros((12, 1)), labels))
        assert ds.labels.tolist() == [0, 1, 0, 0]

    def test_csv_round_trip(self, tmp_path):
        ds = DivergenceScores("a", np.array([8, 9]), np.array([[0.1, -1 / 3], [2e-17, 5.0]]), np.array([0, 1]))
        ds.write_csv(tmp_path / "ds.csv")
        back = DivergenceScores.read_csv(tmp_path / "ds.csv", "a")
        assert np.array_equal(back.scores, ds.scores) and back.labels.tolist() == [0, 1]
        assert (tmp_path / "ds.csv").read_text().splitlines()[0] == "message_index,label,ds_1,ds_2"


class TestCalibrationSplit:
    def test_half(self):
        cal, ev = split_calibration_evaluation(scores(200, pos=[10, 150]))
        assert len(cal) == 100 and len(ev) == 100
        assert cal.index[-1] < ev.index[0]

    def test_ratio(self):
        cal, ev = split_calibration_evaluation(scores(200, pos=[10]), ratio=0.3)
        assert (len(cal), len(ev)) == (60, 140)

    def test_missing_attack_class(self):
        with pytest.raises(ValidationError):
            split_calibration_evaluation(scores(200, pos=[150]))

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            split_calibration_evaluation(scores(), ratio=1.0)

    def test_fit_on_scores(self):
        cal, _ = split_calibration_evaluation(scores(20, pos=range(5, 10)))
        tree = tree_fit(cal)
        assert np.array_equal(tree.predict(cal.scores), cal.labels)
