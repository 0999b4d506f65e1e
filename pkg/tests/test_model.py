import math

import numpy as np
import pytest

from dpgmm import linalg
from dpgmm.errors import DegenerateClass, EmptyClass, LabelOutOfRange, ParseError
from dpgmm.model import (
    LabeledDataset,
    WeightCounts,
    fit_gmm,
    kmeans_label,
    lattice_cardinality,
    load_dataset,
    log_lattice_cardinality,
)


def write_csv(path, rows, header="f0,f1,label"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")


class TestLoadDataset:
    def test_basic(self, tmp_path):
        p = tmp_path / "data.csv"
        write_csv(p, ["0.0,1.0,1", "1.0,0.0,1", "5.0,5.0,2", "6.0,6.0,2"])
        data = load_dataset(p, 2)
        assert data.n == 4 and data.d == 2 and data.k == 2
        assert tuple(data.class_counts()) == (2, 2)

    def test_label_out_of_range(self, tmp_path):
        p = tmp_path / "data.csv"
        write_csv(p, ["0,0,1", "1,1,3"])
        with pytest.raises(LabelOutOfRange):
            load_dataset(p, 2)

    def test_empty_class(self, tmp_path):
        p = tmp_path / "data.csv"
        write_csv(p, ["0,0,1", "1,1,1", "2,2,1"])
        with pytest.raises(EmptyClass):
            load_dataset(p, 2)

    def test_parse_error_carries_line_number(self, tmp_path):
        p = tmp_path / "data.csv"
        write_csv(p, ["0,0,1", "oops,1,2"])
        with pytest.raises(ParseError, match=":3:"):
            load_dataset(p, 2)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "data.csv"
        write_csv(p, ["0,0,1"], header="x,y,label")
        with pytest.raises(ParseError, match=":1:"):
            load_dataset(p, 2)


class TestFitGmm:
    def test_degenerate_class(self):
        data = LabeledDataset(np.array([[0.0], [2.0], [10.0]]),
                              np.array([1, 1, 2]), k=2)
        with pytest.raises(DegenerateClass):
            fit_gmm(data)

    def test_two_point_class_statistics(self):
        data = LabeledDataset(np.array([[0.0], [2.0], [5.0], [7.0]]),
                              np.array([1, 1, 2, 2]), k=2)
        fit = fit_gmm(data)
        assert fit.weights.weights()[0] == pytest.approx(0.5)
        assert fit.means[0, 0] == pytest.approx(1.0)
        # ((0-1)^2 + (2-1)^2) / (2-1) = 2
        assert fit.covs[0, 0, 0] == pytest.approx(2.0)

    def test_weights_exact_histogram(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(1, 4, size=60)
        labels[:6] = [1, 1, 2, 2, 3, 3]
        data = LabeledDataset(rng.standard_normal((60, 3)), labels, k=3)
        fit = fit_gmm(data)
        assert fit.weights.counts == tuple(np.bincount(labels, minlength=4)[1:])

    def test_pooled_mean_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            n, d, k = 40, 3, 4
            labels = np.concatenate([np.arange(1, k + 1)] * 2 + [rng.integers(1, k + 1, n - 2 * k)])
            pts = rng.standard_normal((n, d)) * 3.0 + 1.0
            fit = fit_gmm(LabeledDataset(pts, labels, k=k))
            pooled = fit.weights.weights() @ fit.means
            np.testing.assert_allclose(pooled, pts.mean(axis=0), atol=1e-10)

    def test_covariances_pd_after_regularization(self):
        # collinear class data: raw sample covariance is rank one
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0],
                        [0.0, 5.0], [1.0, 6.0], [2.0, 8.0]])
        labels = np.array([1, 1, 1, 2, 2, 2])
        fit = fit_gmm(LabeledDataset(pts, labels, k=2))
        assert fit.regularization > 0.0
        for cov in fit.covs:
            assert linalg.is_pd(cov)

    def test_roundtrip_dict(self):
        data = LabeledDataset(np.array([[0.0], [2.0], [5.0], [7.0]]),
                              np.array([1, 1, 2, 2]), k=2)
        fit = fit_gmm(data)
        again = type(fit).from_dict(fit.to_dict())
        assert again.weights == fit.weights
        np.testing.assert_array_equal(again.means, fit.means)
        np.testing.assert_array_equal(again.covs, fit.covs)


class TestKmeans:
    def test_well_separated(self):
        pts = np.array([[0.0], [0.1], [10.0], [10.1]])
        labels = kmeans_label(pts, 2, seed=0)
        assert labels[0] == labels[1] and labels[2] == labels[3]
        assert labels[0] != labels[2]

    def test_k_equals_one(self):
        labels = kmeans_label(np.random.default_rng(0).standard_normal((7, 2)), 1, seed=3)
        assert set(labels) == {1}

    def test_k_equals_n(self):
        pts = np.arange(5, dtype=float)[:, None]
        labels = kmeans_label(pts, 5, seed=1)
        assert len(set(labels)) == 5  # every point its own cluster, cost 0

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        pts = rng.standard_normal((50, 3))
        a = kmeans_label(pts, 4, seed=7)
        b = kmeans_label(pts, 4, seed=7)
        assert np.array_equal(a, b)

    def test_all_clusters_nonempty(self):
        rng = np.random.default_rng(10)
        pts = rng.standard_normal((30, 2))
        labels = kmeans_label(pts, 6, seed=2)
        assert set(labels) == set(range(1, 7))


class TestLattice:
    def test_small_cases(self):
        assert lattice_cardinality(4, 2) == 3
        assert lattice_cardinality(17, 1) == 1
        assert lattice_cardinality(150, 3) == 11026  # C(149, 2)

    def test_log_form(self):
        assert log_lattice_cardinality(150, 3) == pytest.approx(math.log(11026))
        # big-integer argument exercised through the exact log
        assert log_lattice_cardinality(10_000, 6) == pytest.approx(
            math.lgamma(10_000) - math.lgamma(5 + 1) - math.lgamma(9_994 + 1), rel=1e-12
        )


class TestWeightCounts:
    def test_validation(self):
        with pytest.raises(ValueError):
            WeightCounts((0, 3))
        assert WeightCounts((2, 2)).weights().tolist() == [0.5, 0.5]

    def test_hashable_for_support_lookup(self):
        assert WeightCounts((1, 2)) == WeightCounts((1, 2))
        assert len({WeightCounts((1, 2)), WeightCounts((1, 2))}) == 1
