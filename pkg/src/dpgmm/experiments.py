"""Synthetic-data generation and the sweep harness.

Ground-truth models are drawn the same way the evaluation corpus is built:
Dirichlet(1) class frequencies, component means uniform on [-10, 10]^d, and
covariances from a Wishart with d+1 degrees of freedom and identity scale.
Sweeps vary one knob (epsilon, n, k, d) around the default instance
(K=5, d=3, N=1000, eps=1, delta=1e-5) and tabulate the analytic expected KL
per trial; per-trial seeds derive from (variable, value, trial), so results
are independent of execution order.
"""

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import linalg, rng
from .adjacency import AdjacencyMode, enumerate_adjacency
from .divergence import expected_kl
from .mechanisms import sample_wishart
from .model import GmmParams, LabeledDataset, WeightCounts, fit_gmm
from .planner import PrivacySpec, plan, worker_count

_VARIABLES = ("epsilon", "n", "k", "d")
_VAR_IDS = {name: i for i, name in enumerate(_VARIABLES)}

DEFAULT_BASE = {
    "k": 5,
    "d": 3,
    "n": 1000,
    "epsilon": 1.0,
    "delta": 1e-5,
    "lam": 1e-3,
}


@dataclass
class SweepSpec:
    variable: str
    grid: list
    trials: int
    base: dict = field(default_factory=lambda: dict(DEFAULT_BASE))
    seed: int = 0

    def __post_init__(self):
        if self.variable not in _VARIABLES:
            raise ValueError(f"unknown sweep variable {self.variable!r}")
        if not self.grid:
            raise ValueError("grid must be nonempty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        merged = dict(DEFAULT_BASE)
        merged.update(self.base)
        self.base = merged


def generate_synthetic(k, d, n, seed):
    """Draw a ground-truth mixture and n labeled samples from it.

    Labels are redrawn (fresh stream draws) until every class has at least
    two members, so the dataset is always fittable.  Returns the dataset and
    the generating parameters (weights recorded as the realized label
    histogram, which keeps them on the 1/n lattice).
    """
    if n < 2 * k:
        raise ValueError("need n >= 2k so every class can reach two members")
    gen = rng.substream(seed, rng.STREAM_SYNTHETIC)
    weights = gen.dirichlet(np.ones(k))
    means = gen.uniform(-10.0, 10.0, (k, d))
    covs = np.stack([sample_wishart(1.0, d, gen) for _ in range(k)])

    for _ in range(1000):
        labels = gen.choice(k, size=n, p=weights) + 1
        counts = np.bincount(labels, minlength=k + 1)[1:]
        if counts.min() >= 2:
            break
    else:
        raise RuntimeError("failed to draw a dataset with two members per class")

    points = np.zeros((n, d))
    for cls in range(1, k + 1):
        idx = np.flatnonzero(labels == cls)
        lower = linalg.cholesky(covs[cls - 1])
        points[idx] = means[cls - 1] + gen.standard_normal((idx.size, d)) @ lower.T

    data = LabeledDataset(points=points, labels=labels, k=k)
    truth = GmmParams(
        weights=WeightCounts(tuple(int(c) for c in counts)),
        means=means,
        covs=covs,
    )
    return data, truth


def run_trial(params, seed):
    """One sweep cell: generate, fit, enumerate adjacency, plan, score."""
    data, _ = generate_synthetic(params["k"], params["d"], params["n"], seed)
    fit = fit_gmm(data)
    adj = enumerate_adjacency(data, fit, AdjacencyMode("label"))
    spec = PrivacySpec(
        epsilon=params["epsilon"],
        delta=params["delta"],
        lam=params["lam"],
        mode=AdjacencyMode("label"),
    )
    built = plan(fit, adj, spec)
    report = expected_kl(fit, built, lambda_draws=0)
    return report.analytic_expected_kl


def _run_cell(args):
    variable, value_idx, value, trial, params, seed = args
    last_error = None
    for attempt in range(3):
        cell_seed = rng.derive_seed(seed, _VAR_IDS[variable], value_idx, trial, attempt)
        try:
            return (value_idx, value, trial, run_trial(params, cell_seed), None)
        except Exception as exc:  # retried with a fresh seed, then recorded
            last_error = f"{type(exc).__name__}: {exc}"
    return (value_idx, value, trial, None, last_error)


def run_sweep(spec, out_dir):
    """Run the sweep and write raw.csv / summary.csv (plus failures.csv if
    any cell exhausted its retries).  Returns the summary rows."""
    os.makedirs(out_dir, exist_ok=True)
    tasks = []
    for value_idx, value in enumerate(spec.grid):
        params = dict(spec.base)
        if spec.variable == "epsilon":
            params["epsilon"] = float(value)
        else:
            params[spec.variable] = int(value)
        for trial in range(spec.trials):
            tasks.append((spec.variable, value_idx, value, trial, params, spec.seed))

    workers = min(worker_count(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[2]))

    raw_path = os.path.join(out_dir, "raw.csv")
    with open(raw_path, "w", encoding="utf-8", newline="\n") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["variable", "value", "trial", "kl"])
        for value_idx, value, trial, kl, err in results:
            if kl is not None:
                writer.writerow([spec.variable, value, trial, format(kl, ".17g")])

    failures = [(v, t, e) for _, v, t, kl, e in results if kl is None]
    if failures:
        with open(os.path.join(out_dir, "failures.csv"), "w", encoding="utf-8",
                  newline="\n") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["value", "trial", "error"])
            writer.writerows(failures)

    summary = []
    for value_idx, value in enumerate(spec.grid):
        kls = np.asarray([kl for vi, _, _, kl, _ in results
                          if vi == value_idx and kl is not None])
        if not kls.size:
            continue
        mean = float(kls.mean())
        half = 1.96 * float(kls.std(ddof=1)) / math.sqrt(kls.size) if kls.size > 1 else 0.0
        summary.append((value, mean, half))

    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8",
              newline="\n") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["variable", "value", "mean_kl", "ci95_half_width"])
        for value, mean, half in summary:
            writer.writerow([spec.variable, value,
                             format(mean, ".17g"), format(half, ".17g")])
    return summary
