import math

import numpy as np
import pytest

from dpgmm import linalg
from dpgmm.errors import DomainError, NotPositiveDefinite

from oracles import digamma_oracle


def random_spd(rng, d, cond_boost=0.5):
    b = rng.standard_normal((d, d))
    return b @ b.T + cond_boost * np.eye(d)


class TestCholesky:
    def test_identity(self):
        lower = linalg.cholesky(np.eye(3))
        np.testing.assert_array_equal(lower, np.eye(3))

    def test_hand_example(self):
        lower = linalg.cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
        expected = np.array([[2.0, 0.0], [1.0, math.sqrt(2.0)]])
        np.testing.assert_allclose(lower, expected, atol=1e-15)
        np.testing.assert_allclose(lower @ lower.T, [[4, 2], [2, 3]], atol=1e-15)

    def test_indefinite_rejected(self):
        # eigenvalues {3, -1}
        with pytest.raises(NotPositiveDefinite):
            linalg.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_multiply_back(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = int(rng.integers(1, 9))
            a = random_spd(rng, d)
            lower = linalg.cholesky(a)
            rel = np.linalg.norm(lower @ lower.T - a) / np.linalg.norm(a)
            assert rel <= 1e-10

    def test_relative_pivot_tolerance(self):
        # scale-invariant rejection: a tiny negative pivot relative to the
        # diagonal fails at any absolute magnitude
        base = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-13]])
        for scale in (1e-6, 1.0, 1e6):
            with pytest.raises(NotPositiveDefinite):
                linalg.cholesky(base * scale)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        a = random_spd(rng, 6)
        l1 = linalg.cholesky(a)
        l2 = linalg.cholesky(a.copy())
        assert np.array_equal(l1, l2)


class TestInverse:
    def test_identity(self):
        np.testing.assert_array_equal(linalg.inverse_spd(np.eye(4)), np.eye(4))

    def test_diagonal(self):
        inv = linalg.inverse_spd(np.diag([2.0, 4.0]))
        np.testing.assert_allclose(inv, np.diag([0.5, 0.25]), atol=1e-16)

    def test_multiply_back_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            d = int(rng.integers(2, 9))
            a = random_spd(rng, d, cond_boost=0.05)
            inv = linalg.inverse_spd(a)
            assert np.max(np.abs(a @ inv - np.eye(d))) <= 1e-8

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            linalg.inverse_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestLogdet:
    def test_identity(self):
        assert linalg.logdet_spd(np.eye(5)) == 0.0

    def test_diagonal(self):
        value = linalg.logdet_spd(np.diag([math.e, math.e ** 2]))
        assert abs(value - 3.0) < 1e-14

    def test_against_jacobi_eigen_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            d = int(rng.integers(2, 8))
            a = random_spd(rng, d)
            vals, _ = linalg.eigh_jacobi(a)
            assert abs(linalg.logdet_spd(a) - float(np.sum(np.log(vals)))) <= 1e-9

    def test_inverse_cancellation(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = random_spd(rng, int(rng.integers(2, 7)), cond_boost=0.2)
            total = linalg.logdet_spd(a) + linalg.logdet_spd(linalg.inverse_spd(a))
            assert abs(total) <= 1e-8


class TestDigamma:
    def test_euler_mascheroni(self):
        assert abs(linalg.digamma(1.0) + 0.5772156649015329) <= 1e-12

    def test_psi_three_halves(self):
        expected = 2.0 - linalg.EULER_MASCHERONI - 2.0 * math.log(2.0)
        assert abs(linalg.digamma(1.5) - expected) <= 1e-12
        assert abs(expected - 0.0364899740) <= 1e-9

    def test_against_high_precision_oracle(self):
        rng = np.random.default_rng(4)
        for a in rng.uniform(0.5, 20.0, size=50):
            assert abs(linalg.digamma(float(a)) - digamma_oracle(float(a))) <= 1e-10

    def test_domain(self):
        with pytest.raises(DomainError):
            linalg.digamma(0.0)
        with pytest.raises(DomainError):
            linalg.digamma(-1.3)


class TestMultivariateDigamma:
    def test_scalar_case_matches(self):
        rng = np.random.default_rng(6)
        for a in rng.uniform(0.5, 20.0, size=50):
            assert abs(linalg.multivariate_digamma(float(a), 1)
                       - digamma_oracle(float(a))) <= 1e-10

    def test_two_dimensional(self):
        expected = linalg.digamma(1.5) + linalg.digamma(1.0)
        value = linalg.multivariate_digamma(1.5, 2)
        assert abs(value - expected) <= 1e-14
        assert abs(value + 0.5407256909) <= 1e-9

    def test_precondition(self):
        with pytest.raises(DomainError):
            linalg.multivariate_digamma(0.5, 2)


class TestJacobi:
    def test_reconstruction_and_order(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            d = int(rng.integers(1, 9))
            sym = rng.standard_normal((d, d))
            sym = (sym + sym.T) / 2.0
            vals, vecs = linalg.eigh_jacobi(sym)
            np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.T, sym, atol=1e-10)
            assert np.all(np.diff(vals) >= -1e-12)
            np.testing.assert_allclose(vecs @ vecs.T, np.eye(d), atol=1e-10)

    def test_top_eigenvector(self):
        a = np.diag([1.0, 5.0, 2.0])
        v = linalg.top_eigenvector(a)
        np.testing.assert_allclose(np.abs(v), [0.0, 1.0, 0.0], atol=1e-12)
        assert linalg.spectral_norm_spd(a) == pytest.approx(5.0, abs=1e-12)
