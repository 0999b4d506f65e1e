"""Dataset ingestion, non-private GMM fitting, the weight lattice, and
K-means pre-labeling.

Mixture weights are kept as integer counts throughout: membership of the
fitted and released weight vectors in the 1/N histogram lattice must be
exact, which float weights cannot guarantee.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg, rng
from .errors import (
    DegenerateClass,
    EmptyClass,
    LabelOutOfRange,
    ParseError,
)


@dataclass(frozen=True)
class WeightCounts:
    """Class-membership counts; weights are counts / total, exactly on-lattice."""

    counts: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) < 1:
            raise ValueError("counts must be nonempty")
        if any(c < 1 for c in counts):
            raise ValueError(f"every class count must be >= 1, got {counts}")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self):
        return sum(self.counts)

    @property
    def k(self):
        return len(self.counts)

    def weights(self):
        return np.asarray(self.counts, dtype=float) / float(self.total)


@dataclass
class LabeledDataset:
    """N points in R^d with labels in 1..k; every class nonempty."""

    points: np.ndarray
    labels: np.ndarray
    k: int

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int)
        if self.points.shape[0] != self.labels.shape[0]:
            raise ValueError("points and labels disagree on N")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.labels.size and (self.labels.min() < 1 or self.labels.max() > self.k):
            bad = self.labels[(self.labels < 1) | (self.labels > self.k)][0]
            raise LabelOutOfRange(f"label {bad} outside 1..{self.k}")
        counts = np.bincount(self.labels, minlength=self.k + 1)[1:]
        missing = np.flatnonzero(counts == 0)
        if missing.size:
            raise EmptyClass(f"class {missing[0] + 1} has no members")

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.k + 1)[1:].copy()


@dataclass
class GmmParams:
    """Fitted mixture: lattice weights, per-class means and PD covariances."""

    weights: WeightCounts
    means: np.ndarray
    covs: np.ndarray
    regularization: float = 0.0

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.covs = np.asarray(self.covs, dtype=float)
        if self.covs.ndim == 2:
            self.covs = self.covs[None, :, :]
        if self.means.shape[0] != self.weights.k or self.covs.shape[0] != self.weights.k:
            raise ValueError("weights, means and covs disagree on K")
        if self.covs.shape[1:] != (self.means.shape[1], self.means.shape[1]):
            raise ValueError("covariance shape does not match the feature dimension")

    @property
    def k(self):
        return self.weights.k

    @property
    def d(self):
        return self.means.shape[1]

    @property
    def n(self):
        return self.weights.total

    def to_dict(self):
        return {
            "k": self.k,
            "d": self.d,
            "n": self.n,
            "counts": list(self.weights.counts),
            "components": [
                {"mean": self.means[i].tolist(), "cov": self.covs[i].tolist()}
                for i in range(self.k)
            ],
            "regularization": self.regularization,
        }

    @classmethod
    def from_dict(cls, data):
        from .serialize import expect_key, expect_list

        counts = expect_list(data, "counts", int)
        comps = expect_key(data, "components", list)
        means = [expect_key(c, f"components[{i}].mean", list) for i, c in enumerate(comps)]
        covs = [expect_key(c, f"components[{i}].cov", list) for i, c in enumerate(comps)]
        return cls(
            weights=WeightCounts(tuple(counts)),
            means=np.asarray(means, dtype=float),
            covs=np.asarray(covs, dtype=float),
            regularization=float(data.get("regularization", 0.0)),
        )


def _parse_header(header, path):
    if not header or header[-1] != "label":
        raise ParseError(f"{path}:1: header must end with 'label'")
    d = len(header) - 1
    if d < 1:
        raise ParseError(f"{path}:1: no feature columns found")
    expected = [f"f{j}" for j in range(d)]
    if header[:-1] != expected:
        raise ParseError(f"{path}:1: feature columns must be f0..f{d - 1}")
    return d


def load_points(path, with_labels=True):
    """Parse a dataset CSV into (points, labels or None).

    Header must read ``f0,...,f{d-1},label``; when ``with_labels`` is False
    a trailing label column is tolerated but ignored (and a header without
    one is accepted).
    """
    points = []
    labels = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}:1: file is empty") from None
        has_label_col = bool(header) and header[-1] == "label"
        if with_labels and not has_label_col:
            raise ParseError(f"{path}:1: header must end with 'label'")
        if has_label_col:
            d = _parse_header(header, path)
        else:
            d = len(header)
            if header != [f"f{j}" for j in range(d)] or d < 1:
                raise ParseError(f"{path}:1: feature columns must be f0..f{d - 1}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            want = d + 1 if has_label_col else d
            if len(row) != want:
                raise ParseError(f"{path}:{lineno}: expected {want} fields, got {len(row)}")
            try:
                points.append([float(v) for v in row[:d]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if has_label_col:
                try:
                    labels.append(int(row[d]))
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: label {row[d]!r} is not an integer"
                    ) from None
    if not points:
        raise ParseError(f"{path}:2: no data rows")
    pts = np.asarray(points, dtype=float)
    return pts, (np.asarray(labels, dtype=int) if has_label_col else None)


def load_dataset(path, k):
    """Load a labeled CSV and validate labels against 1..k."""
    points, labels = load_points(path, with_labels=True)
    return LabeledDataset(points=points, labels=labels, k=int(k))


def save_dataset(path, points, labels=None):
    """Write points (and optional 1-based labels) in the dataset CSV format."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = points.shape[1]
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        header = [f"f{j}" for j in range(d)]
        if labels is not None:
            header.append("label")
        handle.write(",".join(header) + "\n")
        for i in range(points.shape[0]):
            row = [format(v, ".17g") for v in points[i]]
            if labels is not None:
                row.append(str(int(labels[i])))
            handle.write(",".join(row) + "\n")


def _regularize_to_pd(cov):
    """Add ridge rho*I until the PD check passes; returns (cov, rho_used)."""
    if linalg.is_pd(cov):
        return cov, 0.0
    d = cov.shape[0]
    rho = max(1e-8 * float(np.trace(cov)) / d, 1e-12)
    for _ in range(5):
        candidate = cov + rho * np.eye(d)
        if linalg.is_pd(candidate):
            return candidate, rho
        rho *= 100.0
    raise DegenerateClass("covariance could not be regularized to positive definite")


def fit_gmm(data):
    """Fit weights, means and covariances by histogram and sample statistics.

    Weights are exact counts over N; per-class covariances use the N_k - 1
    denominator and are ridge-regularized to PD when sample rank falls short
    (e.g. N_k <= d or collinear features).  Classes with fewer than two
    members are a hard DegenerateClass error.
    """
    counts = data.class_counts()
    small = np.flatnonzero(counts < 2)
    if small.size:
        raise DegenerateClass(
            f"class {small[0] + 1} has {counts[small[0]]} member(s); need >= 2"
        )
    k, d = data.k, data.d
    means = np.zeros((k, d))
    covs = np.zeros((k, d, d))
    rho_max = 0.0
    for cls in range(1, k + 1):
        pts = data.points[data.labels == cls]
        mu = pts.mean(axis=0)
        centered = pts - mu
        cov = centered.T @ centered / (pts.shape[0] - 1)
        cov = (cov + cov.T) / 2.0
        cov, rho = _regularize_to_pd(cov)
        means[cls - 1] = mu
        covs[cls - 1] = cov
        rho_max = max(rho_max, rho)
    return GmmParams(
        weights=WeightCounts(tuple(int(c) for c in counts)),
        means=means,
        covs=covs,
        regularization=rho_max,
    )


def kmeans_label(points, k, seed, max_iter=100):
    """Lloyd's algorithm with farthest-point seeding; returns 1-based labels.

    The first center is drawn from the seeded stream; subsequent centers take
    the point farthest from the chosen set (ties to the lowest index).  Empty
    clusters are re-seeded with the globally farthest point, so every
    returned cluster is nonempty.  Deterministic in (points, k, seed).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    gen = rng.substream(seed, rng.STREAM_KMEANS)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(gen.integers(n))]
    dist2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        centers[j] = points[int(np.argmax(dist2))]
        dist2 = np.minimum(dist2, np.sum((points - centers[j]) ** 2, axis=1))

    assign = np.full(n, -1)
    for _ in range(max_iter):
        d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        for j in range(k):
            members = new_assign == j
            if not members.any():
                # farthest point from its current center claims the empty slot
                far = int(np.argmax(d2[np.arange(n), new_assign]))
                new_assign[far] = j
                members = new_assign == j
            centers[j] = points[members].mean(axis=0)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return assign + 1


def lattice_cardinality(n, k):
    """|S| = C(n-1, k-1): compositions of n into k positive parts."""
    if not (n >= k >= 1):
        raise ValueError(f"need n >= k >= 1, got n={n}, k={k}")
    return math.comb(n - 1, k - 1)


def log_lattice_cardinality(n, k):
    """ln C(n-1, k-1), exact big-integer argument."""
    return math.log(lattice_cardinality(n, k))
