"""Randomized release primitives: Gaussian mean noise, Wishart covariance
noise, and the smoothed discrete weight mapper.

A note on the weight mapper.  The optimized transition matrix is
row-stochastic (each output row sums to one over inputs), but a mechanism
needs an output PMF per *input*, i.e. a column.  Column j* (the fitted
weight vector's column) need not sum to one, so the sampler renormalizes it
by its own sum.  This preserves the optimized entry pattern; the audit
module measures the likelihood ratio actually realized by the normalized
family instead of assuming the nominal one.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg, rng
from .model import WeightCounts

_ROW_SUM_TOL = 1e-12


@dataclass
class TransitionPlan:
    """Restricted-support weight-mapping plan.

    support[0..m] lists the fitted weights and their neighbors in a fixed
    order; ``matrix`` is the (m+1)x(m+1) transition block with rows summing
    to one; ``lam`` mixes in a uniform draw over the full lattice so the
    output support is dataset-independent.
    """

    support: list
    j_star: int
    matrix: np.ndarray
    lam: float
    log_s_cardinality: float

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        m1 = len(self.support)
        if self.matrix.shape != (m1, m1):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match support size {m1}"
            )
        if not 0 <= self.j_star < m1:
            raise ValueError("j_star outside the support")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError("lambda must lie in [0, 1)")
        if np.any(self.matrix < 0):
            raise ValueError("transition entries must be nonnegative")
        rows = self.matrix.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > _ROW_SUM_TOL:
            raise ValueError("transition rows must sum to 1")
        # Within a row every off-j* entry carries the same value (the e^{+-eps0}
        # multiple of the stay entry), which the optimal construction guarantees.
        if m1 > 1:
            off = np.delete(self.matrix, self.j_star, axis=1)
            spread = np.max(np.abs(off - off[:, :1]))
            if spread > _ROW_SUM_TOL:
                raise ValueError("off-diagonal entries must be constant per row")

    @property
    def m(self):
        """Number of weight neighbors (support size minus the fitted vector)."""
        return len(self.support) - 1

    def column_pmf(self):
        """Output PMF for the fitted input: column j* renormalized."""
        col = self.matrix[:, self.j_star]
        total = float(col.sum())
        if total <= 0:
            raise ValueError("column j_star has zero mass")
        return col / total

    def to_dict(self):
        return {
            "support": [list(w.counts) for w in self.support],
            "j_star": self.j_star,
            "matrix": self.matrix.tolist(),
            "lambda": self.lam,
            "log_s_cardinality": self.log_s_cardinality,
        }

    @classmethod
    def from_dict(cls, data):
        from .serialize import expect_key

        support = [WeightCounts(tuple(c)) for c in expect_key(data, "support", list)]
        return cls(
            support=support,
            j_star=expect_key(data, "j_star", int),
            matrix=np.asarray(expect_key(data, "matrix", list), dtype=float),
            lam=expect_key(data, "lambda", float),
            log_s_cardinality=expect_key(data, "log_s_cardinality", float),
        )


@dataclass
class ReleaseMeta:
    epsilon: float
    delta: float
    epsilon0: float
    lam: float
    seed: int
    adjacency: str

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "epsilon0": self.epsilon0,
            "lambda": self.lam,
            "seed": self.seed,
            "adjacency": self.adjacency,
        }


@dataclass
class ReleasedGmm:
    """Privatized model parameters plus release provenance."""

    weights: WeightCounts
    means: np.ndarray
    covs: np.ndarray
    meta: ReleaseMeta

    def to_dict(self):
        k = self.weights.k
        return {
            "k": k,
            "d": int(self.means.shape[1]),
            "n": self.weights.total,
            "counts": list(self.weights.counts),
            "components": [
                {"mean": self.means[i].tolist(), "cov": self.covs[i].tolist()}
                for i in range(k)
            ],
            "meta": self.meta.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        from .serialize import expect_key, expect_list

        counts = expect_list(data, "counts", int)
        comps = expect_key(data, "components", list)
        meta = expect_key(data, "meta", dict)
        return cls(
            weights=WeightCounts(tuple(counts)),
            means=np.asarray([c["mean"] for c in comps], dtype=float),
            covs=np.asarray([c["cov"] for c in comps], dtype=float),
            meta=ReleaseMeta(
                epsilon=expect_key(meta, "meta.epsilon", float),
                delta=expect_key(meta, "meta.delta", float),
                epsilon0=expect_key(meta, "meta.epsilon0", float),
                lam=expect_key(meta, "meta.lambda", float),
                seed=expect_key(meta, "meta.seed", int),
                adjacency=expect_key(meta, "meta.adjacency", str),
            ),
        )


def sample_gaussian_mean(mu, gamma_inv, gen):
    """mu + L z with L the Cholesky factor of the noise covariance."""
    mu = np.asarray(mu, dtype=float)
    lower = linalg.cholesky(gamma_inv)
    return mu + lower @ gen.standard_normal(mu.shape[0])


def sample_wishart(gamma, d, gen):
    """Wishart draw with scale I/gamma and d+1 degrees of freedom.

    Bartlett construction: lower-triangular A with A[i, i] the square root
    of a chi-square with d+1-i degrees of freedom (0-based row i, built as a
    sum of squared normals) and standard-normal strict lower entries; the
    sample is A A^T / gamma, positive definite by construction.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    a = np.zeros((d, d))
    for i in range(d):
        z = gen.standard_normal(d + 1 - i)
        a[i, i] = math.sqrt(float(z @ z))
        if i:
            a[i, :i] = gen.standard_normal(i)
    return (a @ a.T) / gamma


def sample_uniform_lattice(n, k, gen):
    """Uniform composition of n into k positive parts via stars and bars."""
    if k == 1:
        return WeightCounts((n,))
    cuts = np.sort(gen.choice(n - 1, size=k - 1, replace=False)) + 1
    bounds = np.concatenate(([0], cuts, [n]))
    return WeightCounts(tuple(int(c) for c in np.diff(bounds)))


def sample_weights(plan, n, k, gen):
    """Draw released weights: lambda-mixture of the uniform lattice and the
    normalized column-j* distribution."""
    if gen.random() < plan.lam:
        return sample_uniform_lattice(n, k, gen)
    pmf = plan.column_pmf()
    idx = int(gen.choice(len(pmf), p=pmf))
    return plan.support[idx]


def release(fit, plan, seed):
    """Apply all three mechanisms and attach provenance metadata.

    Per-class noise uses sub-streams keyed by (kind, class), so the release
    is reproducible regardless of evaluation order.
    """
    k, d = fit.k, fit.d
    means = np.zeros_like(fit.means)
    covs = np.zeros_like(fit.covs)
    for cls in range(k):
        spec = plan.per_class[cls]
        means[cls] = sample_gaussian_mean(
            fit.means[cls], spec.gamma_inv, rng.substream(seed, rng.STREAM_MEAN, cls)
        )
        covs[cls] = fit.covs[cls] + sample_wishart(
            spec.gamma_k, d, rng.substream(seed, rng.STREAM_COV, cls)
        )
    weights = sample_weights(
        plan.transition, fit.n, k, rng.substream(seed, rng.STREAM_WEIGHTS, 0)
    )
    meta = ReleaseMeta(
        epsilon=plan.epsilon,
        delta=plan.delta,
        epsilon0=plan.eps0,
        lam=plan.lam,
        seed=int(seed),
        adjacency=plan.adjacency,
    )
    return ReleasedGmm(weights=weights, means=means, covs=covs, meta=meta)


def sample_gmm(released, n, seed):
    """Ancestral sampling from a released model: class by weights, then the
    class Gaussian.  Post-processing of the release, so no extra privacy cost."""
    gen = rng.substream(seed, rng.STREAM_SAMPLE)
    weights = released.weights.weights()
    k, d = released.means.shape
    labels = gen.choice(k, size=n, p=weights) + 1
    points = np.zeros((n, d))
    for cls in range(1, k + 1):
        idx = np.flatnonzero(labels == cls)
        if not idx.size:
            continue
        lower = linalg.cholesky(released.covs[cls - 1])
        z = gen.standard_normal((idx.size, d))
        points[idx] = released.means[cls - 1] + z @ lower.T
    return points, labels
