"""Differentially private release of Gaussian mixture models.

Fits a mixture to labeled data by histogram and sample statistics, then
releases the parameters under a chosen (epsilon, delta) budget using
multivariate Gaussian noise on the means, Wishart noise on the covariances
and a smoothed discrete mapper on the mixture weights, with the noise
distributions optimized to minimize the closed-form expected KL divergence
between the released and fitted models.
"""

from .adjacency import (
    AdjacencyMode,
    AdjacencySet,
    clip_dataset,
    enumerate_adjacency,
    enumerate_label_flip,
    enumerate_record_level,
)
from .audit import AuditReport, run_audit
from .divergence import (
    KlReport,
    expected_kl,
    g_value,
    monte_carlo_expected_kl,
    realized_kl,
)
from .errors import (
    ClipViolation,
    DegenerateAdjacency,
    DegenerateClass,
    DomainError,
    DpGmmError,
    EmptyClass,
    InfeasibleBudget,
    LabelOutOfRange,
    NotPositiveDefinite,
    NumericalFailure,
    ParseError,
    SchemaMismatch,
)
from .experiments import SweepSpec, generate_synthetic, run_sweep
from .mechanisms import (
    ReleasedGmm,
    TransitionPlan,
    release,
    sample_gaussian_mean,
    sample_gmm,
    sample_uniform_lattice,
    sample_weights,
    sample_wishart,
)
from .model import (
    GmmParams,
    LabeledDataset,
    WeightCounts,
    fit_gmm,
    kmeans_label,
    lattice_cardinality,
    load_dataset,
    log_lattice_cardinality,
)
from .planner import (
    NoisePlan,
    PerClassNoise,
    PrivacySpec,
    plan,
    update_gamma,
    update_transition,
    verify_ledger,
)
from .sdp import SdpProblem, prune_constraints, solve, solve_with_pruning

__version__ = "0.1.0"
