import numpy as np
import pytest

import oracles
from fastabc.data import from_arrays
from fastabc.tree import (
    LeafMode,
    best_split,
    fit_tree,
    grow_tree,
    leaf_value,
    leaf_values,
    predict_tree,
    simplified_gain,
)


def _dataset(X, n_classes=3):
    X = np.asarray(X, dtype=np.float64)
    return from_arrays(X, np.arange(X.shape[0]) % n_classes, n_classes=n_classes)


class TestGain:
    def test_two_point_example(self):
        assert simplified_gain([1.0, 2.0], [1.0, 1.0], 1) == pytest.approx(0.5, rel=1e-15)
        z, w = np.array([1.0, 2.0]), np.ones(2)
        assert oracles.weighted_se(z, w) == pytest.approx(0.5)
        assert oracles.definitional_gain(z, w, 1) == pytest.approx(0.5)

    def test_unit_weights_reduce_to_response_sums(self, rng):
        z = rng.normal(size=30)
        s = 11
        expected = z[:s].sum() ** 2 / s + z[s:].sum() ** 2 / (30 - s) - z.sum() ** 2 / 30
        assert simplified_gain(z, np.ones(30), s) == pytest.approx(expected, rel=1e-12)

    def test_newton_weights_reduce_to_residual_sums(self, rng):
        # with z = (r-p)/h and w = h the gain is written in sums of (r-p) and h
        resid = rng.normal(size=25)
        h = rng.uniform(0.05, 0.25, size=25)
        s = 9
        expected = (resid[:s].sum() ** 2 / h[:s].sum() + resid[s:].sum() ** 2 / h[s:].sum()
                    - resid.sum() ** 2 / h.sum())
        assert simplified_gain(resid / h, h, s) == pytest.approx(expected, rel=1e-10)

    def test_shift_invariant(self, rng):
        z = rng.normal(size=40)
        w = rng.uniform(0.1, 2, size=40)
        assert simplified_gain(z + 7.5, w, 13) == pytest.approx(simplified_gain(z, w, 13),
                                                                rel=1e-8, abs=1e-10)


class TestBestSplit:
    def test_two_point_example(self):
        ds = _dataset([[0.0], [1.0], [1.0]])
        split = best_split([1.0, 2.0, 2.0], np.ones(3), [0, 1], ds)
        assert split.feature == 0 and split.threshold == 0.5
        assert split.gain == pytest.approx(0.5, rel=1e-12)

    def test_constant_response(self, rng):
        ds = _dataset(rng.normal(size=(20, 3)))
        assert best_split(np.full(20, 0.7), np.ones(20), np.arange(20), ds) is None

    def test_constant_feature(self):
        ds = _dataset([[5.0], [5.0], [5.0]])
        assert best_split([0.0, 1.0, 2.0], np.ones(3), [0, 1, 2], ds) is None

    def test_matches_brute_force(self, rng):
        for _ in range(20):
            X = rng.normal(size=(50, 3))
            z = rng.normal(size=50)
            w = rng.uniform(0.01, 1.0, size=50)
            split = best_split(z, w, np.arange(50), _dataset(X))
            f, thr, gain = oracles.brute_force_split(X, z, w, np.arange(50))
            assert (split.feature, split.threshold) == (f, thr)
            assert split.gain == pytest.approx(gain, rel=1e-9)

    def test_subset_node(self, rng):
        X = rng.integers(0, 6, size=(80, 4)).astype(float)
        z = rng.normal(size=80)
        w = rng.uniform(0.1, 1.0, size=80)
        samples = np.sort(rng.choice(80, 30, replace=False))
        split = best_split(z, w, samples, _dataset(X))
        ref = oracles.brute_force_split(X, z, w, samples)
        assert (split.feature, split.threshold) == ref[:2]
        assert split.gain == pytest.approx(ref[2], rel=1e-9)

    def test_tie_goes_to_lower_feature(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        split = best_split([0.0, 0.0, 1.0, 1.0], np.ones(4), np.arange(4), _dataset(X))
        assert split.feature == 0 and split.threshold == 1.5


class TestGrowTree:
    def test_stump_is_global_best(self, rng):
        X = rng.normal(size=(60, 3))
        z = rng.normal(size=60)
        ds = _dataset(X)
        tree = fit_tree(z, np.ones(60), ds, J=2)
        split = best_split(z, np.ones(60), np.arange(60), ds)
        assert tree.n_leaves == 2
        assert (tree.feature[0], tree.threshold[0]) == (split.feature, split.threshold)

    def test_separable_zero_residual(self, rng):
        x = rng.permutation(40).astype(float)
        z = np.floor(x / 10)
        ds = _dataset(x[:, None])
        tree, leaf_of = grow_tree(z, np.ones(40), ds, J=4)
        for leaf in np.unique(leaf_of):
            assert oracles.weighted_se(z[leaf_of == leaf], np.ones((leaf_of == leaf).sum())) < 1e-9

    def test_partition(self, rng):
        X = rng.normal(size=(100, 5))
        z = rng.normal(size=100)
        ds = _dataset(X)
        tree, leaf_of = grow_tree(z, np.ones(100), ds, J=20)
        assert tree.n_leaves == 20
        assert tree.n_nodes == 39
        assert tree.is_leaf[leaf_of].all()
        np.testing.assert_array_equal(tree.apply(X), leaf_of)
        assert set(np.unique(leaf_of)) == set(tree.leaves())

    def test_stalls_when_nothing_to_split(self):
        ds = _dataset(np.arange(6, dtype=float)[:, None])
        tree, leaf_of = grow_tree(np.zeros(6), np.ones(6), ds, J=5)
        assert tree.n_leaves == 1
        assert (leaf_of == 0).all()

    def test_rejects_small_j(self, rng):
        with pytest.raises(ValueError):
            grow_tree(np.zeros(3), np.ones(3), _dataset(np.zeros((3, 1))), J=1)

    def test_deterministic(self, rng):
        X = rng.normal(size=(200, 6))
        z = rng.normal(size=200)
        w = rng.uniform(0.1, 1, size=200)
        a = fit_tree(z, w, _dataset(X), J=12)
        b = fit_tree(z, w, _dataset(X.copy()), J=12)
        assert a.same_as(b)


class TestLeafValues:
    def test_plain_example(self):
        assert leaf_value([0.5], [0.25], [0], LeafMode.PLAIN_LOGIT, 3) == pytest.approx(4 / 3)

    def test_abc_example(self):
        assert leaf_value([0.5], [0.25], [0], LeafMode.ABC, 3) == pytest.approx(2.0)

    def test_zero_numerator(self):
        for den in (0.0, 1e-30, 5.0):
            assert leaf_value([0.0], [den], [0], LeafMode.ABC, 3) == 0.0

    def test_vectorised_matches_scalar(self, rng):
        X = rng.normal(size=(90, 2))
        num = rng.normal(size=90)
        den = rng.uniform(0.01, 0.25, size=90)
        tree, leaf_of = grow_tree(num, np.ones(90), _dataset(X), J=6)
        leaf_values(tree, leaf_of, num, den, LeafMode.PLAIN_MART, 4)
        for leaf in tree.leaves():
            expected = leaf_value(num, den, np.flatnonzero(leaf_of == leaf), LeafMode.PLAIN_MART, 4)
            assert tree.value[leaf] == pytest.approx(expected, rel=1e-12)


class TestPredict:
    @pytest.fixture
    def stump(self):
        ds = _dataset([[0.0], [1.0], [1.0]])
        tree, leaf_of = grow_tree(np.array([1.0, 2.0, 2.0]), np.ones(3), ds, J=2)
        tree.value[tree.left[0]] = -1.0
        tree.value[tree.right[0]] = 3.0
        return tree

    def test_boundary_goes_left(self, stump):
        assert stump.threshold[0] == 0.5
        assert predict_tree(stump, [0.5]) == -1.0

    def test_just_above(self, stump):
        assert predict_tree(stump, [0.50001]) == 3.0
