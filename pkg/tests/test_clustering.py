import itertools

import numpy as np
import pytest

from clustertransfer.clustering import (
    ClusterModel,
    WcssCurve,
    assign,
    elbow_k,
    elbow_select,
    kmeans,
    lloyd,
    wcss,
    wcss_curve,
)
from clustertransfer.errors import ShapeError


def brute_force_2_partition(X: np.ndarray) -> float:
    """Minimum WCSS over every split of the rows into two nonempty groups."""
    n = X.shape[0]
    best = np.inf
    for bits in itertools.product((0, 1), repeat=n - 1):
        labels = np.array((0,) + bits)
        if labels.all() or not labels.any():
            continue
        cost = 0.0
        for g in (0, 1):
            pts = X[labels == g]
            cost += float(((pts - pts.mean(axis=0)) ** 2).sum())
        best = min(best, cost)
    return best


def blobs(n_centers: int, seed: int, per: int = 30, spread: float = 0.1) -> np.ndarray:
    """Gaussian blobs on the vertices of a regular polygon, radius 2.

    Adjacent centers sit >= 2 units apart, i.e. >= 20x the per-axis spread.
    """
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * np.pi)
    angles = phase + 2 * np.pi * np.arange(n_centers) / n_centers
    centers = 2.0 * np.c_[np.cos(angles), np.sin(angles)] + rng.uniform(-5, 5, 2)
    return np.vstack([c + spread * rng.standard_normal((per, 2)) for c in centers])


def partition(labels) -> set:
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), set()).add(i)
    return {frozenset(g) for g in groups.values()}


class TestKmeans:
    def test_symmetric_pairs(self):
        X = np.array([[0, 0], [0, 1], [10, 0], [10, 1]], dtype=float)
        m = kmeans(X, 2, seed=0)
        got = sorted(map(tuple, m.centroids))
        assert got == [(0.0, 0.5), (10.0, 0.5)]
        assert partition(m.labels) == {frozenset({0, 1}), frozenset({2, 3})}

    def test_k_equals_n(self):
        X = np.random.default_rng(1).standard_normal((6, 2))
        m = kmeans(X, 6, seed=0)
        assert wcss(X, m) == 0.0
        assert partition(m.labels) == {frozenset({i}) for i in range(6)}

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed):
        X = np.random.default_rng(seed).standard_normal((8, 2))
        m = kmeans(X, 2, seed=seed)
        assert wcss(X, m) == pytest.approx(brute_force_2_partition(X), rel=1e-9)

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            kmeans(np.zeros((3, 2)), 4)

    def test_deterministic(self):
        X = np.random.default_rng(3).standard_normal((40, 3))
        a, b = kmeans(X, 3, seed=5), kmeans(X, 3, seed=5)
        np.testing.assert_array_equal(a.centroids, b.centroids)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_centroids_are_member_means(self):
        X = np.random.default_rng(4).standard_normal((50, 2))
        m = kmeans(X, 3, seed=0)
        assert m.converged
        for j in range(3):
            np.testing.assert_allclose(m.centroids[j], X[m.labels == j].mean(axis=0), atol=1e-6)

    def test_duplicate_points(self):
        X = np.array([[1.0, 1.0]] * 5 + [[2.0, 2.0]])
        m = kmeans(X, 3, seed=0)
        assert np.all(np.isfinite(m.centroids))
        assert wcss(X, m) == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_lloyd_wcss_non_increasing(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((60, 2))
        trace: list[float] = []
        lloyd(X, X[rng.choice(60, 4, replace=False)], trace=trace)
        assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


class TestWcss:
    def test_point_at_centroid(self):
        m = ClusterModel(np.array([[1.0, 2.0]]), 1, 0, 0, True, np.array([0]), 0.0)
        assert wcss(np.array([[1.0, 2.0]]), m) == 0.0

    def test_three_four_five(self):
        m = ClusterModel(np.zeros((1, 2)), 1, 0, 0, True, np.array([0]), 0.0)
        assert wcss(np.array([[3.0, 4.0]]), m) == 25.0

    def test_k1_is_n_times_variance(self):
        X = np.random.default_rng(7).standard_normal((30, 4))
        m = kmeans(X, 1, seed=0)
        direct = X.shape[0] * sum(np.var(X[:, j]) for j in range(X.shape[1]))
        assert wcss(X, m) == pytest.approx(direct, rel=1e-12)

    def test_shape_mismatch(self):
        m = ClusterModel(np.zeros((1, 2)), 1, 0, 0, True, np.array([0]), 0.0)
        with pytest.raises(ShapeError):
            wcss(np.zeros((2, 3)), m)


class TestAssign:
    def test_exact_centroid(self):
        m = ClusterModel(np.array([[0.0, 0.0], [5.0, 5.0]]), 2, 0, 0, True, np.array([0, 1]), 0.0)
        assert assign(m, np.array([[5.0, 5.0]]))[0] == 1

    def test_tie_goes_low(self):
        m = ClusterModel(np.array([[0.0], [2.0]]), 2, 0, 0, True, np.array([0, 1]), 0.0)
        assert assign(m, np.array([[1.0]]))[0] == 0

    def test_labels_partition(self):
        X = np.random.default_rng(8).standard_normal((25, 2))
        m = kmeans(X, 3, seed=0)
        labels = assign(m, X)
        assert np.bincount(labels, minlength=3).sum() == 25

    def test_shape_mismatch(self):
        m = ClusterModel(np.zeros((2, 2)), 2, 0, 0, True, np.array([0, 1]), 0.0)
        with pytest.raises(ShapeError):
            assign(m, np.zeros((1, 3)))


class TestElbow:
    @pytest.mark.parametrize("true_k", [2, 3])
    def test_blobs(self, true_k):
        k, curve = elbow_select(blobs(true_k, seed=11), k_max=8, seed=0)
        assert k == true_k
        assert curve.ks == tuple(range(1, 9))

    def test_exhaustive_curve_oracle(self):
        # For two tight blobs the k=2 WCSS equals the brute-force optimum.
        X = blobs(2, seed=3, per=5)
        curve, _ = wcss_curve(X, 4, seed=0)
        assert curve[2] == pytest.approx(brute_force_2_partition(X), rel=1e-9)

    def test_curve_non_increasing(self):
        X = np.random.default_rng(2).standard_normal((80, 3))
        curve, _ = wcss_curve(X, 10, seed=0)
        assert all(b <= a for a, b in zip(curve.values, curve.values[1:]))

    def test_k_max_too_small(self):
        with pytest.raises(ValueError):
            elbow_select(np.zeros((10, 2)), k_max=2)

    def test_second_difference_rule(self):
        curve = WcssCurve((1, 2, 3, 4, 5), (100.0, 40.0, 30.0, 25.0, 22.0))
        # second differences: k=2 -> 50, k=3 -> 5, k=4 -> 2
        assert elbow_k(curve) == 2

    def test_curve_csv_roundtrip(self, tmp_path):
        curve = WcssCurve((1, 2, 3), (10.0, 1 / 3, 0.1))
        curve.to_csv(tmp_path / "w.csv")
        assert WcssCurve.read_csv(tmp_path / "w.csv") == curve
