"""Dense symmetric linear-algebra kernels for small matrices (d up to ~64).

All routines are plain numpy with fixed operation order and no pivoting, so
repeated runs on the same inputs are bit-identical.  Positive definiteness is
always decided by the Cholesky pivot test with a tolerance relative to the
largest diagonal entry; covariance scales vary wildly across datasets, so an
absolute tolerance would not transfer.
"""

import math

import numpy as np

from .errors import DomainError, NotPositiveDefinite

# Pivot <= PIVOT_RTOL * max(diag) counts as not positive definite.
PIVOT_RTOL = 1e-12

EULER_MASCHERONI = 0.577215664901532860606512


def as_symmetric(m, atol=1e-8):
    """Return a float64 copy of ``m`` with exact symmetry enforced.

    Raises ValueError if the input deviates from symmetry by more than
    ``atol`` relative to its largest entry.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.max(np.abs(a)), 1.0)
    if np.max(np.abs(a - a.T)) > atol * scale:
        raise ValueError("matrix is not symmetric")
    return (a + a.T) / 2.0


def cholesky(m, pivot_rtol=PIVOT_RTOL):
    """Lower-triangular L with L @ L.T == m for symmetric positive definite m.

    Raises NotPositiveDefinite when any pivot falls at or below
    ``pivot_rtol * max(diag(m))``.  Pass ``pivot_rtol=0.0`` to accept any
    strictly positive pivot (used by interior-point iterates that approach
    the semidefinite boundary).
    """
    a = np.asarray(m, dtype=float)
    d = a.shape[0]
    tol = pivot_rtol * max(float(np.max(np.diagonal(a))), 0.0)
    lower = np.zeros((d, d))
    for j in range(d):
        pivot = a[j, j] - lower[j, :j] @ lower[j, :j]
        if pivot <= tol or not math.isfinite(pivot):
            raise NotPositiveDefinite(
                f"pivot {pivot:.3e} at column {j} is <= tolerance {tol:.3e}"
            )
        ljj = math.sqrt(pivot)
        lower[j, j] = ljj
        if j + 1 < d:
            lower[j + 1:, j] = (a[j + 1:, j] - lower[j + 1:, :j] @ lower[j, :j]) / ljj
    return lower


def is_pd(m, pivot_rtol=PIVOT_RTOL):
    """True when the Cholesky pivot test passes."""
    try:
        cholesky(m, pivot_rtol=pivot_rtol)
    except NotPositiveDefinite:
        return False
    return True


def solve_lower(lower, b):
    """Solve lower @ y = b by forward substitution; b may have many columns."""
    y = np.array(b, dtype=float)
    vec = y.ndim == 1
    if vec:
        y = y[:, None]
    n = lower.shape[0]
    for i in range(n):
        y[i] = (y[i] - lower[i, :i] @ y[:i]) / lower[i, i]
    return y[:, 0] if vec else y


def solve_upper(upper, b):
    """Solve upper @ y = b by back substitution; b may have many columns."""
    y = np.array(b, dtype=float)
    vec = y.ndim == 1
    if vec:
        y = y[:, None]
    n = upper.shape[0]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - upper[i, i + 1:] @ y[i + 1:]) / upper[i, i]
    return y[:, 0] if vec else y


def solve_spd(m, b, pivot_rtol=PIVOT_RTOL):
    """Solve m @ x = b for symmetric positive definite m via Cholesky."""
    lower = cholesky(m, pivot_rtol=pivot_rtol)
    return solve_upper(lower.T, solve_lower(lower, b))


def inverse_spd(m, pivot_rtol=PIVOT_RTOL):
    """Inverse of a symmetric positive definite matrix, symmetrized exactly."""
    d = np.asarray(m).shape[0]
    inv = solve_spd(m, np.eye(d), pivot_rtol=pivot_rtol)
    return (inv + inv.T) / 2.0


def logdet_spd(m, pivot_rtol=PIVOT_RTOL):
    """ln|m| as twice the log-sum of Cholesky pivots."""
    lower = cholesky(m, pivot_rtol=pivot_rtol)
    return 2.0 * float(np.sum(np.log(np.diagonal(lower))))


def digamma(x):
    """Scalar digamma via upward recurrence into the asymptotic region.

    Absolute error below 1e-12 for x > 0; raises DomainError otherwise.
    """
    if not x > 0.0:
        raise DomainError(f"digamma requires x > 0, got {x}")
    acc = 0.0
    while x < 6.0:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    # Bernoulli tail B_{2n}/(2n x^{2n}) through n = 7; truncation ~1e-13 at x >= 6.
    tail = inv2 * (
        1.0 / 12.0
        - inv2 * (
            1.0 / 120.0
            - inv2 * (
                1.0 / 252.0
                - inv2 * (
                    1.0 / 240.0
                    - inv2 * (
                        1.0 / 132.0
                        - inv2 * (691.0 / 32760.0 - inv2 / 12.0)
                    )
                )
            )
        )
    )
    return acc + math.log(x) - 0.5 * inv - tail


def multivariate_digamma(a, d):
    """psi_d(a) = sum_{j=1..d} psi(a + (1 - j) / 2) for a > (d - 1) / 2."""
    if d < 1:
        raise DomainError(f"dimension must be positive, got {d}")
    if not a > (d - 1) / 2.0:
        raise DomainError(f"multivariate digamma requires a > (d-1)/2, got a={a}, d={d}")
    return sum(digamma(a + (1.0 - j) / 2.0) for j in range(1, d + 1))


def eigh_jacobi(m, sweeps=60, rtol=1e-14):
    """Eigenvalues (ascending) and eigenvectors of a symmetric matrix.

    Cyclic Jacobi rotations; kept out of release paths and used only as a
    test oracle, for worst-direction extraction, and for spectral-norm audit
    checks.  Deterministic: fixed sweep order, stable final sort.
    """
    a = as_symmetric(m)
    d = a.shape[0]
    vecs = np.eye(d)
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        return np.zeros(d), vecs
    for _ in range(sweeps):
        off_mat = a - np.diag(np.diagonal(a))
        off = float(np.linalg.norm(off_mat))
        if off <= rtol * norm:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= rtol * norm:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(d)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a = (a + a.T) / 2.0
                vecs = vecs @ rot
    order = np.argsort(np.diagonal(a), kind="stable")
    return np.diagonal(a)[order].copy(), vecs[:, order].copy()


def spectral_norm_spd(m):
    """Largest eigenvalue of a symmetric PSD matrix via the Jacobi oracle."""
    vals, _ = eigh_jacobi(m)
    return float(vals[-1])


def top_eigenvector(m):
    """Unit eigenvector of the largest eigenvalue, sign-fixed for determinism."""
    _, vecs = eigh_jacobi(m)
    v = vecs[:, -1]
    lead = np.flatnonzero(np.abs(v) > 1e-12)
    if lead.size and v[lead[0]] < 0:
        v = -v
    return v
