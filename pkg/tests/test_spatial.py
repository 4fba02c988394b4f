"""kd-tree correctness against the linear-scan oracle."""

import numpy as np
import pytest

from mvskit.spatial import KDTree, brute_force_nn


class TestKDTree:
    def test_exact_match_with_brute_force_random(self):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((5000, 3))
        queries = rng.standard_normal((500, 3))
        d_tree, i_tree = KDTree(pts).query(queries)
        d_brute, i_brute = brute_force_nn(pts, queries)
        assert np.array_equal(d_tree, d_brute)
        assert np.array_equal(i_tree, i_brute)

    def test_exact_match_on_grid_with_ties(self):
        # translated-grid queries sit exactly between neighbors: the
        # tie rule (smallest index) must match the linear scan
        xs = np.arange(0, 20) * 0.1
        grid = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1).reshape(-1, 2)
        pts = np.concatenate([grid, np.zeros((len(grid), 1))], axis=1)
        queries = pts + np.array([0.05, 0.0, 0.0])
        d_tree, i_tree = KDTree(pts).query(queries)
        d_brute, i_brute = brute_force_nn(pts, queries)
        assert np.array_equal(d_tree, d_brute)
        assert np.array_equal(i_tree, i_brute)

    def test_duplicate_points(self):
        rng = np.random.default_rng(1)
        pts = np.repeat(rng.standard_normal((40, 3)), 5, axis=0)
        queries = rng.standard_normal((100, 3))
        d_tree, i_tree = KDTree(pts).query(queries)
        d_brute, i_brute = brute_force_nn(pts, queries)
        assert np.array_equal(d_tree, d_brute)
        assert np.array_equal(i_tree, i_brute)

    def test_single_point(self):
        tree = KDTree(np.array([[1.0, 2.0, 3.0]]))
        d, i = tree.query(np.array([[1.0, 2.0, 4.0]]))
        assert d[0] == 1.0 and i[0] == 0

    def test_query_of_member_points_is_zero(self):
        rng = np.random.default_rng(2)
        pts = rng.standard_normal((300, 3))
        d, i = KDTree(pts).query(pts)
        assert not d.any()
        assert np.array_equal(i, np.arange(300))

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            KDTree(np.zeros((0, 3)))

    def test_large_cloud_small_leaf(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((2000, 3))
        queries = rng.standard_normal((50, 3))
        d1, i1 = KDTree(pts, leaf_size=1).query(queries)
        d2, i2 = KDTree(pts, leaf_size=64).query(queries)
        db, ib = brute_force_nn(pts, queries)
        assert np.array_equal(d1, db) and np.array_equal(i1, ib)
        assert np.array_equal(d2, db) and np.array_equal(i2, ib)
