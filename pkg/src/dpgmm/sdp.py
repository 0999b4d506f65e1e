"""Interior-point solver for the per-class noise-covariance subproblem:

    minimize    tr(A X)
    subject to  X >= c d_i d_i^T  (PSD order),  X positive definite,

with A positive definite and rank-one lower bounds from adjacent-dataset
mean differences.  The log-barrier exploits the rank-one identity

    ln det(X - c d d^T) = ln det X + ln(1 - c d^T X^{-1} d),

so one Cholesky factorization per Newton step prices every constraint.
Newton runs on the d(d+1)/2-dimensional space of symmetric matrices with an
explicitly assembled Hessian; fine for the small dimensions this package
targets.  The problem is always strictly feasible (2 c max_i |d_i|^2 I), so
there is no infeasible exit, only a step-budget NumericalFailure.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import NumericalFailure

# Barrier ladder: t0 = 1 in normalized units, multiplied by 10 until the
# duality gap (m * d / t for m rank-one PSD constraints in S^d) is below the
# requested relative tolerance.
_T_FACTOR = 10.0
# Centering exit on the squared Newton decrement.  A decrement of 1e-7
# perturbs the gap certificate by a sub-percent factor, while demanding much
# less runs into the cancellation floor of h = 1 - d^T X^{-1} d when slacks
# shrink to ~1e-9 at large t.
_NEWTON_TOL2 = 1e-7
_STALL_TOL2 = 1e-3
_ARMIJO = 0.25
_MAX_NEWTON_DEFAULT = 200


@dataclass
class SdpProblem:
    """min tr(A X) s.t. X >= bound_c * d_i d_i^T for every constraint row."""

    objective_weight: np.ndarray
    constraints: np.ndarray
    bound_c: float

    def __post_init__(self):
        self.objective_weight = linalg.as_symmetric(self.objective_weight)
        self.constraints = np.atleast_2d(np.asarray(self.constraints, dtype=float))
        if not self.bound_c > 0:
            raise ValueError("bound_c must be positive")
        d = self.objective_weight.shape[0]
        if self.constraints.shape[1] != d:
            raise ValueError("constraint vectors do not match the matrix dimension")
        norms = np.sum(self.constraints ** 2, axis=1)
        if not norms.size or float(norms.max()) <= 0.0:
            raise ValueError("need at least one nonzero constraint vector")

    @property
    def dim(self):
        return self.objective_weight.shape[0]


def _sym_basis(d):
    """Basis of S^d: E_(ii) = e_i e_i^T, E_(ij) = e_i e_j^T + e_j e_i^T."""
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    basis = np.zeros((len(pairs), d, d))
    for a, (i, j) in enumerate(pairs):
        basis[a, i, j] += 1.0
        if i != j:
            basis[a, j, i] += 1.0
    return basis


def _mat_from_vec(v, d):
    out = np.zeros((d, d))
    a = 0
    for i in range(d):
        for j in range(i, d):
            out[i, j] = v[a]
            out[j, i] = v[a]
            a += 1
    return out


def _feasible_state(y, dhat):
    """(cholesky(Y), h) when Y is PD and all 1 - d^T Y^{-1} d > 0, else None."""
    try:
        lower = linalg.cholesky(y, pivot_rtol=0.0)
    except linalg.NotPositiveDefinite:
        return None
    w = linalg.solve_lower(lower, dhat.T)
    h = 1.0 - np.sum(w * w, axis=0)
    if np.any(h <= 0.0):
        return None
    return lower, h


def _phi(t, a_norm, y, lower, h, m):
    logdet = 2.0 * float(np.sum(np.log(np.diagonal(lower))))
    return t * float(np.sum(a_norm * y)) - m * logdet - float(np.sum(np.log(h)))


def solve(problem, tol=1e-6, max_newton=_MAX_NEWTON_DEFAULT):
    """Barrier solve to relative objective tolerance ``tol``.

    Returns a strictly feasible X whose objective is within ``tol``
    (relative, certified by the barrier duality gap) of the optimum.
    """
    d = problem.dim
    a = problem.objective_weight
    c = problem.bound_c
    dvecs = problem.constraints
    norms = np.sum(dvecs ** 2, axis=1)
    dvecs = dvecs[norms > 0.0]
    m = dvecs.shape[0]

    # Normalize: X = sigma Y, constraint vectors scaled so the bound is
    # Y >= dhat dhat^T with |dhat|^2 <= 1/2 at the start Y0 = 2I.
    sigma = c * float(np.max(np.sum(dvecs ** 2, axis=1)))
    a_scale = float(np.linalg.norm(a))
    a_norm = a / a_scale
    dhat = dvecs * math.sqrt(c / sigma)

    basis = _sym_basis(d)
    y = 2.0 * np.eye(d)
    t = 1.0
    steps = 0

    while True:
        # Newton centering at this t.
        while True:
            state = _feasible_state(y, dhat)
            if state is None:
                raise NumericalFailure("interior iterate left the feasible cone")
            lower, h = state
            s = linalg.solve_upper(lower.T, linalg.solve_lower(lower, np.eye(d)))
            s = (s + s.T) / 2.0
            u = dhat @ s  # rows are (Y^{-1} dhat_i)^T

            grad_mat = t * a_norm - m * s - u.T @ (u / h[:, None])
            g = np.einsum("aij,ij->a", basis, grad_mat)

            t_mats = np.einsum("ij,ajk,kl->ail", s, basis, s)
            hess = m * np.einsum("aij,bij->ab", t_mats, basis)
            r = np.einsum("mi,aij,mj->ma", u, basis, u)
            hess += r.T @ (r / (h * h)[:, None])
            w = np.einsum("aij,mj->mai", basis, u)
            z = np.einsum("mai,ik->mak", w, s)
            hess += np.einsum("mak,mbk,m->ab", z, w, 2.0 / h)

            try:
                dv = -np.linalg.solve(hess, g)
            except np.linalg.LinAlgError:
                ridge = 1e-12 * float(np.trace(hess)) / hess.shape[0]
                dv = -np.linalg.solve(hess + ridge * np.eye(hess.shape[0]), g)
            decrement2 = float(-g @ dv)
            if decrement2 <= _NEWTON_TOL2:
                break
            if steps >= max_newton:
                raise NumericalFailure(
                    f"Newton step budget {max_newton} exhausted (t = {t:.1e})"
                )

            v = _mat_from_vec(dv, d)
            phi0 = _phi(t, a_norm, y, lower, h, m)
            alpha = 1.0
            while alpha > 1e-12:
                cand = y + alpha * v
                cand_state = _feasible_state(cand, dhat)
                if cand_state is not None:
                    phi1 = _phi(t, a_norm, cand, cand_state[0], cand_state[1], m)
                    if phi1 <= phi0 - _ARMIJO * alpha * decrement2:
                        break
                alpha *= 0.5
            else:
                # Progress has hit the floating-point floor; a small residual
                # decrement still certifies an accurate center.
                if decrement2 <= _STALL_TOL2:
                    break
                raise NumericalFailure("line search failed to make progress")
            y = y + alpha * v
            steps += 1

        objective = abs(float(np.sum(a_norm * y)))
        if m * d / t <= tol * max(objective, 1e-300):
            break
        t *= _T_FACTOR

    return sigma * y


def _slack_indicators(x, constraints, c):
    """c d^T X^{-1} d per constraint; feasibility means values <= 1."""
    lower = linalg.cholesky(x, pivot_rtol=0.0)
    w = linalg.solve_lower(lower, constraints.T)
    return c * np.sum(w * w, axis=0)


def prune_constraints(problem, x_current, keep):
    """Keep the ``keep`` constraints with the largest slack indicators.

    Exact duplicate vectors are removed first; ties and order are resolved
    by a stable sort so pruning is deterministic.
    """
    if keep < problem.dim:
        raise ValueError("keep must be at least the matrix dimension")
    unique = np.unique(problem.constraints, axis=0)
    unique = unique[np.sum(unique ** 2, axis=1) > 0.0]
    scores = _slack_indicators(x_current, unique, problem.bound_c)
    order = np.argsort(-scores, kind="stable")[:keep]
    order = np.sort(order)
    return SdpProblem(problem.objective_weight, unique[order], problem.bound_c)


def solve_with_pruning(problem, tol=1e-6, keep=None, feas_rtol=1e-9,
                       max_rounds=50):
    """Active-set driver: solve on the most-binding constraints, then verify
    against the full set and re-add violations until all are satisfied."""
    d = problem.dim
    if keep is None:
        keep = max(2 * d * (d + 1) // 2, 32)
    full = np.unique(problem.constraints, axis=0)
    full = full[np.sum(full ** 2, axis=1) > 0.0]
    if full.shape[0] <= keep:
        return solve(SdpProblem(problem.objective_weight, full, problem.bound_c), tol=tol)

    # Initial ranking by norm: with the scaled-identity start, the slack
    # indicator reduces to a multiple of |d|^2.
    scores = np.sum(full ** 2, axis=1)
    order = np.argsort(-scores, kind="stable")
    active = np.zeros(full.shape[0], dtype=bool)
    active[order[:keep]] = True

    for _ in range(max_rounds):
        x = solve(SdpProblem(problem.objective_weight, full[active], problem.bound_c),
                  tol=tol)
        q = _slack_indicators(x, full, problem.bound_c)
        violated = np.flatnonzero((q > 1.0 + feas_rtol) & ~active)
        if not violated.size:
            return x
        worst = violated[np.argsort(-q[violated], kind="stable")[:keep]]
        active[worst] = True
    raise NumericalFailure("active-set loop failed to cover all constraints")
