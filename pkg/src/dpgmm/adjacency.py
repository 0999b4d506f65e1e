"""Adjacency enumeration: the structures that drive every DP bound.

For the default label-flip adjacency, a neighbor moves one point between two
classes, shifting two class means and two weight coordinates.  Mean
differences are computed by incremental update identities,

    removal:   mu_k - (N_k mu_k - x) / (N_k - 1) = (x - mu_k) / (N_k - 1)
    addition:  mu_k - (N_k mu_k + x) / (N_k + 1) = (mu_k - x) / (N_k + 1)

which cost O(NK) overall; brute-force refitting survives only as a test
oracle.  Record-level variants (remove / add / feature-change) replace the
enumeration with the smaller neighbor sets and clip-bound radii.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ClipViolation
from .model import LabeledDataset, WeightCounts

LABEL_FLIP = "label"
REMOVE_ONE = "remove"
ADD_ONE = "add"
FEATURE_CHANGE = "feature"

VARIANTS = (LABEL_FLIP, REMOVE_ONE, ADD_ONE, FEATURE_CHANGE)

# Relative slack when checking the clip precondition; scaling a vector onto
# the norm-B sphere can overshoot by a few ulps.
_CLIP_RTOL = 1e-12


@dataclass(frozen=True)
class AdjacencyMode:
    """DP adjacency variant plus the feature-norm bound where one is needed."""

    variant: str
    clip_bound: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown adjacency variant {self.variant!r}")
        if self.variant in (FEATURE_CHANGE, ADD_ONE):
            if self.clip_bound is None or not self.clip_bound > 0:
                raise ValueError(
                    f"{self.variant} adjacency requires a positive clip bound"
                )


@dataclass
class AdjacencySet:
    """Per-class mean-difference vectors, weight neighbors, and bookkeeping.

    ``mean_diffs[k]`` holds one row per recorded constraint for class k+1
    (possibly empty).  ``mean_bounds``, when set, gives a per-class radius:
    the mean shift can point anywhere inside that ball (add / feature-change
    modes).  ``excluded_flips`` counts label flips dropped because they would
    have emptied a class; those neighbors fall outside the weight lattice.
    """

    mode: AdjacencyMode
    mean_diffs: list
    weight_neighbors: list
    class_sizes: np.ndarray
    mean_bounds: Optional[np.ndarray] = None
    excluded_flips: int = 0

    @property
    def k(self):
        return len(self.class_sizes)

    def summary(self):
        return {
            "mode": self.mode.variant,
            "clip_bound": self.mode.clip_bound,
            "class_sizes": [int(c) for c in self.class_sizes],
            "constraints_per_class": [int(m.shape[0]) for m in self.mean_diffs],
            "weight_neighbors": len(self.weight_neighbors),
            "excluded_flips": self.excluded_flips,
            "mean_bounds": None if self.mean_bounds is None
            else [float(b) for b in self.mean_bounds],
        }


def _check_clip(data, bound):
    norms = np.linalg.norm(data.points, axis=1)
    limit = bound * (1.0 + _CLIP_RTOL)
    bad = np.flatnonzero(norms > limit)
    if bad.size:
        raise ClipViolation(
            f"point {bad[0]} has norm {norms[bad[0]]:.6g} > clip bound {bound}"
        )


def clip_dataset(data, b):
    """Scale every point onto the norm-b ball; interior points are untouched."""
    if not b > 0:
        raise ValueError("clip bound must be positive")
    norms = np.linalg.norm(data.points, axis=1)
    scale = np.ones_like(norms)
    over = norms > b
    scale[over] = b / norms[over]
    return LabeledDataset(points=data.points * scale[:, None],
                          labels=data.labels.copy(), k=data.k)


def enumerate_label_flip(data, fit):
    """Adjacency structure for single-label flips.

    Every admissible flip (point n from class k to k', requiring N_k >= 2 so
    no class empties) records two constraints: the removal difference for
    class k and the addition difference for class k'.  Per-class lists are
    sorted canonically by the generating flip (n, k').  The weight-neighbor
    set holds every counts vector reachable by one flip with all entries
    still positive.
    """
    counts = data.class_counts()
    k, d = data.k, data.d
    means = fit.means
    labels = data.labels
    points = data.points

    rows = [[] for _ in range(k)]  # (n, target, vector) per class
    excluded = 0
    for src in range(1, k + 1):
        idx = np.flatnonzero(labels == src)
        n_src = counts[src - 1]
        if n_src < 2:
            excluded += idx.size * (k - 1)
            continue
        removal = (points[idx] - means[src - 1]) / (n_src - 1)
        for tgt in range(1, k + 1):
            if tgt == src:
                continue
            addition = (means[tgt - 1] - points[idx]) / (counts[tgt - 1] + 1)
            rows[src - 1].append((idx, np.full(idx.size, tgt), removal))
            rows[tgt - 1].append((idx, np.full(idx.size, tgt), addition))

    mean_diffs = []
    for cls in range(k):
        if not rows[cls]:
            mean_diffs.append(np.zeros((0, d)))
            continue
        ns = np.concatenate([r[0] for r in rows[cls]])
        tgts = np.concatenate([r[1] for r in rows[cls]])
        vecs = np.vstack([r[2] for r in rows[cls]])
        order = np.lexsort((tgts, ns))
        mean_diffs.append(vecs[order])

    neighbors = []
    for src in range(k):
        if counts[src] < 2:
            continue
        for tgt in range(k):
            if tgt == src:
                continue
            moved = counts.copy()
            moved[src] -= 1
            moved[tgt] += 1
            neighbors.append(tuple(int(c) for c in moved))
    neighbors = [WeightCounts(c) for c in sorted(set(neighbors))]

    return AdjacencySet(
        mode=AdjacencyMode(LABEL_FLIP),
        mean_diffs=mean_diffs,
        weight_neighbors=neighbors,
        class_sizes=counts,
        excluded_flips=excluded,
    )


def enumerate_record_level(data, fit, mode):
    """Adjacency structure for record-level variants.

    remove:  one point leaves some class; K decremented weight neighbors and
             per-class removal differences.
    feature: one feature vector changes inside the norm-B ball; the weights
             are untouched (their release needs no randomization) and each
             class mean can shift by at most 2B/N_k in any direction.
    add:     one bounded point joins some class; K incremented weight
             neighbors and a per-class shift radius (B + |mu_k|)/(N_k + 1).
    """
    if mode.variant == LABEL_FLIP:
        return enumerate_label_flip(data, fit)
    counts = data.class_counts()
    k, d = data.k, data.d
    if mode.variant in (FEATURE_CHANGE, ADD_ONE):
        _check_clip(data, mode.clip_bound)

    if mode.variant == REMOVE_ONE:
        mean_diffs = []
        for cls in range(1, k + 1):
            pts = data.points[data.labels == cls]
            if counts[cls - 1] < 2:
                mean_diffs.append(np.zeros((0, d)))
                continue
            mean_diffs.append((pts - fit.means[cls - 1]) / (counts[cls - 1] - 1))
        neighbors = []
        for cls in range(k):
            if counts[cls] < 2:
                continue
            dec = counts.copy()
            dec[cls] -= 1
            neighbors.append(WeightCounts(tuple(int(c) for c in dec)))
        return AdjacencySet(
            mode=mode,
            mean_diffs=mean_diffs,
            weight_neighbors=neighbors,
            class_sizes=counts,
        )

    if mode.variant == FEATURE_CHANGE:
        bounds = 2.0 * mode.clip_bound / counts.astype(float)
        return AdjacencySet(
            mode=mode,
            mean_diffs=[np.zeros((0, d)) for _ in range(k)],
            weight_neighbors=[],
            class_sizes=counts,
            mean_bounds=bounds,
        )

    # ADD_ONE
    mean_norms = np.linalg.norm(fit.means, axis=1)
    bounds = (mode.clip_bound + mean_norms) / (counts.astype(float) + 1.0)
    neighbors = []
    for cls in range(k):
        inc = counts.copy()
        inc[cls] += 1
        neighbors.append(WeightCounts(tuple(int(c) for c in inc)))
    return AdjacencySet(
        mode=mode,
        mean_diffs=[np.zeros((0, d)) for _ in range(k)],
        weight_neighbors=neighbors,
        class_sizes=counts,
        mean_bounds=bounds,
    )


def enumerate_adjacency(data, fit, mode):
    """Dispatch on the adjacency variant."""
    if mode.variant == LABEL_FLIP:
        return enumerate_label_flip(data, fit)
    return enumerate_record_level(data, fit, mode)
