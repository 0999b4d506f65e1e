"""Noise-plan construction: budget initialization, alternating updates of the
Wishart scales, mean-noise covariances and weight-transition block, plus the
post-hoc privacy-ledger verification.

Budget accounting per class is

    eps_k  (mean release)  +  3 gamma_k / (2 N_k)  (covariance release)
    +  eps0  (weight mapping)  <=  epsilon,

the Wishart share being pinned at its lower bound since slack there is pure
waste.  Within the per-class subproblem the objective does not involve
eps_k and every constraint relaxes as eps_k grows, so eps_k saturates its
upper bound and the noise-covariance update reduces to an SDP in the
inverse precision alone.
"""

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg, sdp
from .adjacency import ADD_ONE, FEATURE_CHANGE, AdjacencyMode, AdjacencySet
from .divergence import component_noise_costs
from .errors import DegenerateAdjacency, InfeasibleBudget
from .mechanisms import TransitionPlan
from .model import log_lattice_cardinality

_EARLY_STOP = 1e-3
_LEDGER_TOL = 1e-9


def worker_count(default=1):
    """Worker cap from DPGMM_THREADS; results never depend on it."""
    value = os.environ.get("DPGMM_THREADS", "")
    try:
        return max(1, int(value))
    except ValueError:
        return default


@dataclass(frozen=True)
class PrivacySpec:
    """Target (epsilon, delta) with smoothing weight and adjacency mode."""

    epsilon: float
    delta: float
    lam: float
    mode: AdjacencyMode
    eps0_frac: float = 1.0 / 3.0
    uniform_bound: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        if not 0.0 <= self.eps0_frac < 1.0:
            raise ValueError("eps0_frac must lie in [0, 1)")
        if self.uniform_bound and self.mode.clip_bound is None:
            raise ValueError("the uniform-bound variant requires a clip bound")


@dataclass
class PerClassNoise:
    eps_k: float
    gamma_k: float
    gamma_inv: np.ndarray


@dataclass
class NoisePlan:
    """Full mechanism description produced by the planner."""

    epsilon: float
    delta: float
    lam: float
    eps0: float
    per_class: list
    transition: TransitionPlan
    objective_trace: list
    converged_iterations: int
    adjacency: str
    clip_bound: Optional[float] = None

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "lambda": self.lam,
            "eps0": self.eps0,
            "classes": [
                {
                    "eps_k": c.eps_k,
                    "gamma_k": c.gamma_k,
                    "gamma_inv": c.gamma_inv.tolist(),
                }
                for c in self.per_class
            ],
            "transition": self.transition.to_dict(),
            "objective_trace": list(self.objective_trace),
            "iterations": self.converged_iterations,
            "adjacency": self.adjacency,
            "clip_bound": self.clip_bound,
        }

    @classmethod
    def from_dict(cls, data):
        from .serialize import expect_key

        classes = [
            PerClassNoise(
                eps_k=expect_key(c, f"classes[{i}].eps_k", float),
                gamma_k=expect_key(c, f"classes[{i}].gamma_k", float),
                gamma_inv=np.asarray(expect_key(c, f"classes[{i}].gamma_inv", list),
                                     dtype=float),
            )
            for i, c in enumerate(expect_key(data, "classes", list))
        ]
        clip = data.get("clip_bound")
        return cls(
            epsilon=expect_key(data, "epsilon", float),
            delta=expect_key(data, "delta", float),
            lam=expect_key(data, "lambda", float),
            eps0=expect_key(data, "eps0", float),
            per_class=classes,
            transition=TransitionPlan.from_dict(expect_key(data, "transition", dict)),
            objective_trace=[float(v) for v in expect_key(data, "objective_trace", list)],
            converged_iterations=expect_key(data, "iterations", int),
            adjacency=expect_key(data, "adjacency", str),
            clip_bound=None if clip is None else float(clip),
        )


def update_gamma(fit, class_sizes, epsilon, eps0, eps_ks):
    """Optimal Wishart scales per class: the smaller of the unconstrained
    stationary point (d+1)/d tr(Sigma_k^{-1}) and the privacy cap
    2 N_k (epsilon - eps0 - eps_k) / 3."""
    sizes = np.asarray(class_sizes, dtype=float)
    slacks = epsilon - eps0 - np.asarray(eps_ks, dtype=float)
    return _update_gamma(fit, sizes, slacks)


def _update_gamma(fit, class_sizes, slacks):
    d = fit.d
    gammas = np.zeros(fit.k)
    for cls in range(fit.k):
        if not slacks[cls] > 0:
            raise InfeasibleBudget(
                f"class {cls + 1}: no budget left for the covariance release"
                f" (slack {slacks[cls]:.3e})"
            )
        sigma_inv = linalg.inverse_spd(fit.covs[cls])
        unconstrained = (d + 1) / d * float(np.trace(sigma_inv))
        cap = 2.0 * class_sizes[cls] * slacks[cls] / 3.0
        gammas[cls] = min(unconstrained, cap)
    return gammas


def update_transition(g_values, eps_budget_remainder, support, j_star, lam,
                      log_s_cardinality):
    """Closed-form optimal transition block.

    eps0 takes the whole remaining budget (the objective is non-increasing
    in eps0), each row's stay entry is 1/(1 + m e^{eps0}) when its g-value
    is nonnegative and 1/(1 + m e^{-eps0}) otherwise, and off entries are
    the e^{+-eps0} multiples that make rows sum to one exactly.
    """
    if not eps_budget_remainder > 0:
        raise InfeasibleBudget("no budget left for the weight mechanism")
    eps0 = float(eps_budget_remainder)
    m1 = len(support)
    m = m1 - 1
    matrix = np.zeros((m1, m1))
    if m == 0:
        matrix[0, 0] = 1.0
    else:
        up = math.exp(eps0)
        down = math.exp(-eps0)
        for i in range(m1):
            if g_values[i] >= 0.0:
                stay = 1.0 / (1.0 + m * up)
                off = up * stay
            else:
                stay = 1.0 / (1.0 + m * down)
                off = down * stay
            matrix[i, :] = off
            matrix[i, j_star] = stay
    plan = TransitionPlan(
        support=list(support),
        j_star=j_star,
        matrix=matrix,
        lam=lam,
        log_s_cardinality=log_s_cardinality,
    )
    return plan, eps0


def _closed_form_gamma_inv(radius, eps_k, delta, d):
    """Uniform-bound noise covariance: the isotropic matrix that makes the
    ball-radius sensitivity bound tight."""
    c = 2.0 * math.log(2.0 / delta) / (eps_k * eps_k)
    return c * radius * radius * np.eye(d)


def _uniform_radius(adj, cls):
    """Worst mean-shift radius for a class under the clip bound."""
    b = adj.mode.clip_bound
    n_k = float(adj.class_sizes[cls])
    variant = adj.mode.variant
    if variant == FEATURE_CHANGE:
        return 2.0 * b / n_k
    if variant == ADD_ONE:
        return float(adj.mean_bounds[cls])
    # label flip / remove-one: the removal update divides by N_k - 1
    return 2.0 * b / (n_k - 1.0)


def _solve_gamma_inv(fit, adj, cls, eps_k, delta, uniform_bound, prev_gamma_inv,
                     sdp_tol):
    """Per-class noise covariance given the saturated eps_k."""
    d = fit.d
    c = 2.0 * math.log(2.0 / delta) / (eps_k * eps_k)
    variant = adj.mode.variant

    if uniform_bound or variant == FEATURE_CHANGE:
        return _closed_form_gamma_inv(_uniform_radius(adj, cls), eps_k, delta, d)

    if variant == ADD_ONE:
        # The shift can point anywhere inside the bound ball; cover it with
        # cutting planes along the worst direction of the current precision,
        # recomputed until the ball-worst quadratic form is within budget.
        radius = float(adj.mean_bounds[cls])
        if prev_gamma_inv is not None:
            gamma = linalg.inverse_spd(prev_gamma_inv)
            direction = linalg.top_eigenvector(gamma)
        else:
            direction = np.eye(d)[0]
        cuts = [radius * direction]
        for _ in range(8 * d):
            problem = sdp.SdpProblem(linalg.inverse_spd(fit.covs[cls]),
                                     np.asarray(cuts), c)
            x = sdp.solve(problem, tol=sdp_tol)
            gamma = linalg.inverse_spd(x)
            worst = radius * radius * linalg.spectral_norm_spd(gamma)
            if worst <= (1.0 + 1e-9) / c:
                return x
            cuts.append(radius * linalg.top_eigenvector(gamma))
        return _closed_form_gamma_inv(radius, eps_k, delta, d)

    diffs = adj.mean_diffs[cls]
    diffs = diffs[np.sum(diffs ** 2, axis=1) > 0.0] if diffs.size else diffs
    if diffs.size == 0:
        raise DegenerateAdjacency(
            f"class {cls + 1} has no adjacency constraints and no fallback bound"
        )
    problem = sdp.SdpProblem(linalg.inverse_spd(fit.covs[cls]), diffs, c)
    return sdp.solve_with_pruning(problem, tol=sdp_tol)


def _support_g_values(fit, support, gammas, gamma_invs):
    """g-value of every support row under the current noise parameters."""
    costs = component_noise_costs(fit, gammas, gamma_invs)
    fit_w = fit.weights.weights()
    g_list = []
    for w in support:
        counts = np.asarray(w.counts, dtype=float)
        pt = counts / counts.sum()
        g_list.append(float(np.sum(pt * np.log(pt / fit_w)) + pt @ costs))
    return g_list


def _restricted_objective(transition, g_list):
    """The planner objective: sum_i g_i F[i, j*] over the restricted support
    (the lambda term is omitted, matching the optimized quantity)."""
    return float(sum(
        g * transition.matrix[i, transition.j_star] for i, g in enumerate(g_list)
    ))


def plan(fit, adj, spec, max_iter=50, sdp_tol=1e-6):
    """Run the alternating optimization and return the full noise plan.

    Initialization follows the equal three-way budget split (adjustable via
    spec.eps0_frac); iteration stops when the restricted objective moves by
    less than 1e-3 or after max_iter rounds.  In feature-change mode the
    weights need no randomization, so the transition block is skipped and
    its budget share is zero.
    """
    k, d, n = fit.k, fit.d, fit.n
    class_sizes = adj.class_sizes.astype(float)
    feature_mode = adj.mode.variant == FEATURE_CHANGE

    frac = 0.0 if feature_mode else spec.eps0_frac
    eps0 = frac * spec.epsilon
    eps_ks = np.full(k, (1.0 - frac) * spec.epsilon / 2.0)
    slacks = spec.epsilon - eps0 - eps_ks
    bad = np.flatnonzero(slacks <= 0)
    if bad.size:
        raise InfeasibleBudget(
            f"class {bad[0] + 1}: initial split leaves no covariance budget"
        )

    support = [fit.weights] + sorted(adj.weight_neighbors, key=lambda w: w.counts)
    j_star = 0
    log_s = log_lattice_cardinality(n, k)
    lam = 0.0 if feature_mode else spec.lam

    gammas = np.zeros(k)
    gamma_invs = [None] * k
    transition = None
    trace = []
    prev_gamma = None
    prev_eps = None

    iterations = 0
    for iteration in range(1, max_iter + 1):
        iterations = iteration
        gammas = update_gamma(fit, class_sizes, spec.epsilon, eps0, eps_ks)
        eps_ks = spec.epsilon - eps0 - 3.0 * gammas / (2.0 * class_sizes)

        stable = (
            prev_gamma is not None
            and np.allclose(gammas, prev_gamma, rtol=1e-13, atol=0.0)
            and np.allclose(eps_ks, prev_eps, rtol=1e-13, atol=0.0)
        )
        if not stable:
            # The K subproblems are independent; results land by class index,
            # so the plan does not depend on scheduling.
            def _one(cls):
                return _solve_gamma_inv(
                    fit, adj, cls, eps_ks[cls], spec.delta, spec.uniform_bound,
                    gamma_invs[cls], sdp_tol,
                )

            workers = min(worker_count(), k)
            if workers > 1:
                from concurrent.futures import ThreadPoolExecutor

                with ThreadPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(_one, range(k)))
                gamma_invs = list(results)
            else:
                gamma_invs = [_one(cls) for cls in range(k)]
        prev_gamma = gammas.copy()
        prev_eps = eps_ks.copy()

        g_list = _support_g_values(fit, support, gammas, gamma_invs)
        if feature_mode:
            transition, _ = update_transition(g_list, 1.0, support, j_star, lam, log_s)
            eps0 = 0.0
        else:
            remainder = spec.epsilon - float(np.max(eps_ks + 3.0 * gammas / (2.0 * class_sizes)))
            transition, eps0 = update_transition(g_list, remainder, support, j_star,
                                                 lam, log_s)
        objective = _restricted_objective(transition, g_list)

        trace.append(objective)
        if iteration >= 2 and abs(trace[-1] - trace[-2]) <= _EARLY_STOP:
            break

    per_class = [
        PerClassNoise(eps_k=float(eps_ks[cls]), gamma_k=float(gammas[cls]),
                      gamma_inv=np.asarray(gamma_invs[cls]))
        for cls in range(k)
    ]
    return NoisePlan(
        epsilon=spec.epsilon,
        delta=spec.delta,
        lam=lam,
        eps0=float(eps0),
        per_class=per_class,
        transition=transition,
        objective_trace=trace,
        converged_iterations=iterations,
        adjacency=adj.mode.variant,
        clip_bound=adj.mode.clip_bound,
    )


@dataclass
class LedgerCheck:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class LedgerReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def worst_margin(self):
        return min((c.margin for c in self.checks), default=float("inf"))

    def to_dict(self):
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "margin": c.margin,
                 "detail": c.detail}
                for c in self.checks
            ],
        }


def gaussian_margins(plan_, adj, spec):
    """Per-class margin of the mean-release sensitivity bound.

    For enumerated adjacency the worst quadratic form over the recorded
    differences is compared against eps_k^2 / (2 ln(2/delta)); ball-bounded
    modes use radius^2 times the spectral norm of the precision.
    """
    margins = np.zeros(len(plan_.per_class))
    for cls, per in enumerate(plan_.per_class):
        bound = per.eps_k ** 2 / (2.0 * math.log(2.0 / spec.delta))
        gamma = linalg.inverse_spd(per.gamma_inv)
        worst = 0.0
        diffs = adj.mean_diffs[cls]
        if diffs.size:
            worst = float(np.max(np.einsum("mi,ij,mj->m", diffs, gamma, diffs)))
        if adj.mean_bounds is not None:
            radius = float(adj.mean_bounds[cls])
            worst = max(worst, radius * radius * linalg.spectral_norm_spd(gamma))
        margins[cls] = bound - worst
    return margins


def verify_ledger(plan_, adj, spec):
    """Check every privacy-ledger inequality with explicit margins."""
    checks = []
    class_sizes = adj.class_sizes.astype(float)

    for cls, per in enumerate(plan_.per_class):
        spent = per.eps_k + 3.0 * per.gamma_k / (2.0 * class_sizes[cls]) + plan_.eps0
        margin = spec.epsilon - spent
        checks.append(LedgerCheck(
            name=f"budget_class_{cls + 1}",
            passed=margin >= -_LEDGER_TOL * spec.epsilon,
            margin=float(margin),
            detail=f"eps_k={per.eps_k:.6g} gamma_k={per.gamma_k:.6g} eps0={plan_.eps0:.6g}",
        ))

    for cls, margin in enumerate(gaussian_margins(plan_, adj, spec)):
        bound = plan_.per_class[cls].eps_k ** 2 / (2.0 * math.log(2.0 / spec.delta))
        checks.append(LedgerCheck(
            name=f"mean_sensitivity_class_{cls + 1}",
            passed=margin >= -_LEDGER_TOL * bound,
            margin=float(margin),
        ))

    matrix = plan_.transition.matrix
    j_star = plan_.transition.j_star
    m = plan_.transition.m
    if m > 0 and plan_.adjacency != FEATURE_CHANGE:
        up = math.exp(plan_.eps0)
        down = math.exp(-plan_.eps0)
        worst = float("inf")
        for i in range(m + 1):
            stay = matrix[i, j_star]
            for j in range(m + 1):
                if j == j_star:
                    continue
                worst = min(worst, up * matrix[i, j] - stay, stay - down * matrix[i, j])
        checks.append(LedgerCheck(
            name="transition_ratio",
            passed=worst >= -1e-12,
            margin=worst,
        ))

    if plan_.adjacency == FEATURE_CHANGE:
        b = plan_.clip_bound
        log_term = math.log(2.0 / spec.delta)
        for cls, per in enumerate(plan_.per_class):
            required = 8.0 * b * b * log_term / (class_sizes[cls] ** 2 * per.eps_k ** 2)
            vals, _ = linalg.eigh_jacobi(per.gamma_inv)
            margin = float(vals[0]) - required
            checks.append(LedgerCheck(
                name=f"uniform_bound_class_{cls + 1}",
                passed=margin >= -_LEDGER_TOL * required,
                margin=margin,
            ))

    return LedgerReport(checks=checks)
