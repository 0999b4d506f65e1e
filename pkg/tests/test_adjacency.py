import numpy as np
import pytest

from dpgmm.adjacency import (
    AdjacencyMode,
    clip_dataset,
    enumerate_label_flip,
    enumerate_record_level,
)
from dpgmm.errors import ClipViolation
from dpgmm.model import LabeledDataset, WeightCounts, fit_gmm

from oracles import refit_mean_after_flip, refit_mean_after_removal


def make_dataset(seed, n=30, d=2, k=3):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.arange(1, k + 1)] * 2 + [rng.integers(1, k + 1, n - 2 * k)])
    pts = rng.standard_normal((n, d)) * 2.0 + rng.uniform(-3, 3, d)
    return LabeledDataset(pts, labels, k=k)


class TestLabelFlip:
    def test_weight_neighbor_count(self):
        data = LabeledDataset(np.array([[0.0], [1.0], [5.0], [6.0]]),
                              np.array([1, 1, 2, 2]), k=2)
        adj = enumerate_label_flip(data, fit_gmm(data))
        assert sorted(w.counts for w in adj.weight_neighbors) == [(1, 3), (3, 1)]
        assert len(adj.weight_neighbors) == data.k * (data.k - 1)

    def test_two_constraints_per_admissible_flip(self):
        data = make_dataset(0)
        adj = enumerate_label_flip(data, fit_gmm(data))
        counts = data.class_counts()
        admissible = sum((data.k - 1) for n in range(data.n)
                        if counts[data.labels[n] - 1] >= 2)
        recorded = sum(m.shape[0] for m in adj.mean_diffs)
        assert recorded == 2 * admissible

    def test_removal_difference_hand_case(self):
        # 1-D class {0, 2}: removing the 0 leaves mean 2, difference 1 - 2 = -1
        data = LabeledDataset(np.array([[0.0], [2.0], [5.0], [6.0]]),
                              np.array([1, 1, 2, 2]), k=2)
        fit = fit_gmm(data)
        adj = enumerate_label_flip(data, fit)
        assert any(abs(v[0] + 1.0) < 1e-12 for v in adj.mean_diffs[0])

    def test_against_refit_oracle(self):
        data = make_dataset(1, n=40, d=3, k=3)
        fit = fit_gmm(data)
        adj = enumerate_label_flip(data, fit)
        rng = np.random.default_rng(2)
        counts = data.class_counts()
        checked = 0
        while checked < 100:
            n = int(rng.integers(data.n))
            src = data.labels[n]
            if counts[src - 1] < 2:
                continue
            tgt = int(rng.integers(1, data.k + 1))
            if tgt == src:
                continue
            removal = fit.means[src - 1] - refit_mean_after_flip(data, n, tgt, src)
            addition = fit.means[tgt - 1] - refit_mean_after_flip(data, n, tgt, tgt)
            best_rem = min(np.max(np.abs(adj.mean_diffs[src - 1] - removal), axis=1).min(),
                           np.inf)
            best_add = min(np.max(np.abs(adj.mean_diffs[tgt - 1] - addition), axis=1).min(),
                           np.inf)
            assert best_rem <= 1e-10
            assert best_add <= 1e-10
            checked += 1

    def test_flip_emptying_class_excluded(self):
        # class 3 has a single member: flips away from it are excluded
        pts = np.vstack([np.random.default_rng(3).standard_normal((5, 2)),
                         [[9.0, 9.0]]])
        data = LabeledDataset(pts, np.array([1, 1, 2, 2, 2, 3]), k=3)
        # fitting requires >= 2 per class, so enumerate against a hand model
        from dpgmm.model import GmmParams
        fit = GmmParams(
            weights=WeightCounts((2, 3, 1)),
            means=np.zeros((3, 2)),
            covs=np.stack([np.eye(2)] * 3),
        )
        adj = enumerate_label_flip(data, fit)
        assert adj.excluded_flips == 2  # one point, two possible targets
        for w in adj.weight_neighbors:
            assert min(w.counts) >= 1 and w.total == data.n

    def test_neighbors_valid_counts(self):
        data = make_dataset(4, n=25, k=4)
        adj = enumerate_label_flip(data, fit_gmm(data))
        base = np.asarray(data.class_counts())
        for w in adj.weight_neighbors:
            delta = np.asarray(w.counts) - base
            assert w.total == data.n
            assert min(w.counts) >= 1
            assert sorted(delta[delta != 0]) == [-1, 1]


class TestRecordLevel:
    def test_remove_one_neighbor_count(self):
        data = make_dataset(5, k=3)
        adj = enumerate_record_level(data, fit_gmm(data), AdjacencyMode("remove"))
        assert len(adj.weight_neighbors) == 3
        for w in adj.weight_neighbors:
            assert w.total == data.n - 1

    def test_remove_one_against_refit_oracle(self):
        data = make_dataset(6, n=24, d=2, k=2)
        fit = fit_gmm(data)
        adj = enumerate_record_level(data, fit, AdjacencyMode("remove"))
        rng = np.random.default_rng(7)
        for _ in range(30):
            n = int(rng.integers(data.n))
            cls = data.labels[n]
            diff = fit.means[cls - 1] - refit_mean_after_removal(data, n, cls)
            gap = np.max(np.abs(adj.mean_diffs[cls - 1] - diff), axis=1).min()
            assert gap <= 1e-10

    def test_feature_change_structure(self):
        data = clip_dataset(make_dataset(8), 1.0)
        fit = fit_gmm(data)
        adj = enumerate_record_level(data, fit, AdjacencyMode("feature", clip_bound=1.0))
        assert adj.weight_neighbors == []
        counts = data.class_counts()
        np.testing.assert_allclose(adj.mean_bounds, 2.0 / counts)

    def test_feature_bound_value(self):
        # B = 1, N_k = 10 -> bound 0.2
        pts = np.zeros((10, 2))
        pts[:, 0] = np.linspace(-0.5, 0.5, 10)
        data = LabeledDataset(pts, np.ones(10, dtype=int), k=1)
        fit = fit_gmm(data)
        adj = enumerate_record_level(data, fit, AdjacencyMode("feature", clip_bound=1.0))
        assert adj.mean_bounds[0] == pytest.approx(0.2)

    def test_add_one_structure(self):
        data = clip_dataset(make_dataset(9, k=3), 2.0)
        fit = fit_gmm(data)
        adj = enumerate_record_level(data, fit, AdjacencyMode("add", clip_bound=2.0))
        assert len(adj.weight_neighbors) == 3
        for w in adj.weight_neighbors:
            assert w.total == data.n + 1
        counts = data.class_counts().astype(float)
        expected = (2.0 + np.linalg.norm(fit.means, axis=1)) / (counts + 1.0)
        np.testing.assert_allclose(adj.mean_bounds, expected)

    def test_clip_precondition(self):
        data = make_dataset(10)
        fit = fit_gmm(data)
        with pytest.raises(ClipViolation):
            enumerate_record_level(data, fit, AdjacencyMode("feature", clip_bound=1e-3))

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            AdjacencyMode("feature")
        with pytest.raises(ValueError):
            AdjacencyMode("bogus")


class TestClip:
    def test_on_sphere_unchanged(self):
        data = LabeledDataset(np.array([[3.0, 4.0], [0.1, 0.1]]),
                              np.array([1, 1]), k=1)
        clipped = clip_dataset(data, 5.0)
        np.testing.assert_array_equal(clipped.points[0], [3.0, 4.0])

    def test_scaling(self):
        data = LabeledDataset(np.array([[3.0, 4.0], [0.0, 0.0]]),
                              np.array([1, 1]), k=1)
        clipped = clip_dataset(data, 1.0)
        np.testing.assert_allclose(clipped.points[0], [0.6, 0.8])
        np.testing.assert_array_equal(clipped.points[1], [0.0, 0.0])

    def test_interior_points_untouched(self):
        rng = np.random.default_rng(11)
        pts = rng.standard_normal((20, 3)) * 0.1
        data = LabeledDataset(pts, np.ones(20, dtype=int), k=1)
        clipped = clip_dataset(data, 10.0)
        np.testing.assert_array_equal(clipped.points, pts)
