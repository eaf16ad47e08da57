import numpy as np

from aggrex.tree import tree_fit, tree_from_lines, tree_to_lines, tree_to_rules


def predictions(tree, X):
    return tree.predict_batch(np.asarray(X, dtype=float))


class TestTreeFit:
    def test_pure_labels_single_leaf(self):
        X = np.array([[0.0], [1.0], [2.0]])
        y = np.array([3, 3, 3])
        t = tree_fit(X, y, [0])
        assert t.leaf_count == 1
        assert t.predict([5.0]) == 3

    def test_xor_four_leaves_perfect_fit(self):
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        y = np.array([0, 1, 1, 0])
        t = tree_fit(X, y, [0, 1], max_depth=2, min_leaf=1)
        assert t.leaf_count == 4
        assert np.array_equal(predictions(t, X), y)

    def test_min_leaf_equal_n_majority_leaf(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0, 0, 1, 0])
        t = tree_fit(X, y, [0], min_leaf=4)
        assert t.leaf_count == 1
        assert t.predict([9.0]) == 0

    def test_feature_restriction_respected(self):
        rng = np.random.default_rng(0)
        X = rng.random((60, 4))
        y = (X[:, 3] > 0.5).astype(int)  # signal lives in an excluded feature
        t = tree_fit(X, y, [0, 1], max_depth=4)
        assert t.features_used <= {0, 1}

    def test_tie_breaks_lower_feature(self):
        # two identical columns: the split must use feature 0
        X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        y = np.array([0, 0, 1, 1])
        t = tree_fit(X, y, [0, 1], min_leaf=1)
        assert t.root.feature == 0

    def test_tie_breaks_lower_threshold(self):
        # labels 0,1,0: cutting at 0.5 or 1.5 gives equal Gini gain (one
        # pure singleton either way); the lower midpoint must win
        X = np.array([[0.0], [1.0], [2.0]])
        y = np.array([0, 1, 0])
        t = tree_fit(X, y, [0], min_leaf=1)
        assert t.root.threshold == 0.5

    def test_unrestricted_fit_is_exact_without_conflicts(self):
        rng = np.random.default_rng(4)
        X = rng.random((80, 3))
        y = rng.integers(0, 3, size=80)
        t = tree_fit(X, y, [0, 1, 2], max_depth=None, min_leaf=1)
        assert np.array_equal(predictions(t, X), y)

    def test_leaf_count_at_least_distinct_predictions(self):
        rng = np.random.default_rng(5)
        X = rng.random((50, 2))
        y = rng.integers(0, 4, size=50)
        t = tree_fit(X, y, [0, 1], max_depth=6)
        preds = predictions(t, X)
        assert t.leaf_count >= len(set(int(v) for v in preds))

    def test_majority_tie_smaller_label(self):
        X = np.array([[0.0], [0.0]])
        y = np.array([2, 5])
        t = tree_fit(X, y, [0])
        assert t.predict([0.0]) == 2


class TestTreeText:
    def test_round_trip(self):
        rng = np.random.default_rng(9)
        X = rng.random((70, 3))
        y = rng.integers(0, 3, size=70)
        t = tree_fit(X, y, [0, 1, 2], max_depth=5)
        lines = tree_to_lines(t)
        t2, consumed = tree_from_lines(lines)
        assert consumed == len(lines)
        assert t2.leaf_count == t.leaf_count
        assert t2.features_used == t.features_used
        probe = rng.random((40, 3))
        assert np.array_equal(predictions(t, probe), predictions(t2, probe))
        assert tree_to_lines(t2) == lines

    def test_rules_render(self):
        X = np.array([[0.0], [1.0]])
        y = np.array([0, 1])
        t = tree_fit(X, y, [0], min_leaf=1)
        text = tree_to_rules(t, ["age"])
        assert "if age <= 0.5:" in text
        assert "predict 0" in text and "predict 1" in text
