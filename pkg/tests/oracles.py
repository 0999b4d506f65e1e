"""Independent oracles used by the test suite.

Each oracle deliberately avoids the code paths it checks: the digamma
oracle is arbitrary-precision mpmath, the refit oracle literally rebuilds
datasets, the Gaussian-KL oracle integrates densities by quadrature, and
the SDP oracle is a projected-subgradient method with its own closed-form
eigensolver (numba-compiled; a numpy fallback keeps it runnable anywhere).
"""

import math

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap

    prange = range


def digamma_oracle(x):
    """Arbitrary-precision scalar digamma."""
    import mpmath

    return float(mpmath.digamma(x))


def gaussian_kl_quadrature(mu1, var1, mu2, var2):
    """KL(N(mu1, var1) || N(mu2, var2)) for d=1 by adaptive quadrature."""
    from scipy.integrate import quad

    def integrand(x):
        p = math.exp(-0.5 * (x - mu1) ** 2 / var1) / math.sqrt(2 * math.pi * var1)
        q = math.exp(-0.5 * (x - mu2) ** 2 / var2) / math.sqrt(2 * math.pi * var2)
        return p * (math.log(p) - math.log(q)) if p > 0 else 0.0

    lo = mu1 - 12 * math.sqrt(var1)
    hi = mu1 + 12 * math.sqrt(var1)
    value, _ = quad(integrand, lo, hi, limit=200)
    return value


def refit_mean_after_flip(data, point_index, new_label, cls):
    """Class mean of ``cls`` after literally flipping one label and refitting."""
    from dpgmm.model import LabeledDataset, fit_gmm

    labels = data.labels.copy()
    labels[point_index] = new_label
    refit = fit_gmm(LabeledDataset(points=data.points.copy(), labels=labels, k=data.k))
    return refit.means[cls - 1]


def refit_mean_after_removal(data, point_index, cls):
    """Class mean of ``cls`` after literally deleting one point and refitting."""
    from dpgmm.model import LabeledDataset, fit_gmm

    keep = np.ones(data.n, dtype=bool)
    keep[point_index] = False
    refit = fit_gmm(LabeledDataset(points=data.points[keep],
                                   labels=data.labels[keep], k=data.k))
    return refit.means[cls - 1]


@njit(cache=True)
def _min_eig_2(a00, a01, a11):
    half_tr = 0.5 * (a00 + a11)
    disc = math.sqrt(0.25 * (a00 - a11) ** 2 + a01 * a01)
    lam = half_tr - disc
    v0 = a01
    v1 = lam - a00
    norm = math.sqrt(v0 * v0 + v1 * v1)
    if norm < 1e-300:
        v0, v1 = (1.0, 0.0) if a00 <= a11 else (0.0, 1.0)
        norm = 1.0
    return lam, v0 / norm, v1 / norm


@njit(cache=True)
def _min_eig_3(m, vec):
    """Smallest eigenpair of a symmetric 3x3 via the trigonometric formula.

    Writes the unit eigenvector into ``vec`` and returns the eigenvalue.
    """
    a00, a01, a02 = m[0, 0], m[0, 1], m[0, 2]
    a11, a12, a22 = m[1, 1], m[1, 2], m[2, 2]
    p1 = a01 * a01 + a02 * a02 + a12 * a12
    if p1 < 1e-300:
        lam = a00
        idx = 0
        if a11 < lam:
            lam = a11
            idx = 1
        if a22 < lam:
            lam = a22
            idx = 2
        vec[0] = 1.0 if idx == 0 else 0.0
        vec[1] = 1.0 if idx == 1 else 0.0
        vec[2] = 1.0 if idx == 2 else 0.0
        return lam
    q = (a00 + a11 + a22) / 3.0
    p2 = (a00 - q) ** 2 + (a11 - q) ** 2 + (a22 - q) ** 2 + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    b00, b11, b22 = (a00 - q) / p, (a11 - q) / p, (a22 - q) / p
    b01, b02, b12 = a01 / p, a02 / p, a12 / p
    detb = (b00 * (b11 * b22 - b12 * b12)
            - b01 * (b01 * b22 - b12 * b02)
            + b02 * (b01 * b12 - b11 * b02))
    r = detb / 2.0
    if r < -1.0:
        r = -1.0
    elif r > 1.0:
        r = 1.0
    phi = math.acos(r) / 3.0
    lam = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)

    # eigenvector: cross product of the two most independent rows of A - lam I
    r0 = (a00 - lam, a01, a02)
    r1 = (a01, a11 - lam, a12)
    r2 = (a02, a12, a22 - lam)
    best_norm = -1.0
    bx = by = bz = 0.0
    for pair in range(3):
        if pair == 0:
            u, v = r0, r1
        elif pair == 1:
            u, v = r0, r2
        else:
            u, v = r1, r2
        cx = u[1] * v[2] - u[2] * v[1]
        cy = u[2] * v[0] - u[0] * v[2]
        cz = u[0] * v[1] - u[1] * v[0]
        norm = cx * cx + cy * cy + cz * cz
        if norm > best_norm:
            best_norm = norm
            bx, by, bz = cx, cy, cz
    norm = math.sqrt(best_norm)
    if norm < 1e-300:
        vec[0], vec[1], vec[2] = 1.0, 0.0, 0.0
    else:
        vec[0], vec[1], vec[2] = bx / norm, by / norm, bz / norm
    return lam


@njit(cache=True)
def _subgradient_single(a, dmats, c, iters, eta_scale):
    """Projected-subgradient descent on tr(A X) with Polyak feasibility steps.

    Feasibility violations (most negative eigenvalue of X - c d d^T) are
    removed exactly along their eigenvector; when feasible, a diminishing
    step is taken along -A and the best feasible objective recorded.
    """
    d = a.shape[0]
    m = dmats.shape[0]
    maxn = 0.0
    for i in range(m):
        n2 = 0.0
        for j in range(d):
            n2 += dmats[i, j] * dmats[i, j]
        if n2 > maxn:
            maxn = n2
    scale = c * maxn
    anorm = 0.0
    for i in range(d):
        for j in range(d):
            anorm += a[i, j] * a[i, j]
    anorm = math.sqrt(anorm)
    eta0 = eta_scale * scale / anorm
    feas_tol = 1e-9 * scale

    x = np.zeros((d, d))
    for i in range(d):
        x[i, i] = 2.0 * scale
    slack = np.empty((d, d))
    vec3 = np.empty(3)
    best = 1.0e300
    objective_steps = 0

    for t in range(iters):
        worst = -feas_tol
        wi = -1
        wv0 = wv1 = wv2 = 0.0
        for i in range(m):
            for p in range(d):
                for q in range(d):
                    slack[p, q] = x[p, q] - c * dmats[i, p] * dmats[i, q]
            if d == 2:
                lam, v0, v1 = _min_eig_2(slack[0, 0], slack[0, 1], slack[1, 1])
                v2 = 0.0
            else:
                lam = _min_eig_3(slack, vec3)
                v0, v1, v2 = vec3[0], vec3[1], vec3[2]
            if lam < worst:
                worst = lam
                wi = i
                wv0, wv1, wv2 = v0, v1, v2
        if wi >= 0:
            bump = -worst
            x[0, 0] += bump * wv0 * wv0
            x[0, 1] += bump * wv0 * wv1
            x[1, 0] += bump * wv0 * wv1
            x[1, 1] += bump * wv1 * wv1
            if d == 3:
                x[0, 2] += bump * wv0 * wv2
                x[2, 0] += bump * wv0 * wv2
                x[1, 2] += bump * wv1 * wv2
                x[2, 1] += bump * wv1 * wv2
                x[2, 2] += bump * wv2 * wv2
        else:
            obj = 0.0
            for p in range(d):
                for q in range(d):
                    obj += a[p, q] * x[p, q]
            if obj < best:
                best = obj
            objective_steps += 1
            eta = eta0 / math.sqrt(1.0 + objective_steps)
            for p in range(d):
                for q in range(d):
                    x[p, q] -= eta * a[p, q]
    return best


def sdp_subgradient_oracle(a, dvecs, c, iters=1_000_000, eta_scale=0.5):
    """Best feasible objective found by the independent subgradient method."""
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    dvecs = np.ascontiguousarray(np.atleast_2d(np.asarray(dvecs, dtype=np.float64)))
    if a.shape[0] not in (2, 3):
        raise ValueError("oracle supports d in {2, 3}")
    return float(_subgradient_single(a, dvecs, float(c), int(iters), float(eta_scale)))
