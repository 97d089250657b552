"""Pure-Python (numpy) orthant kernels; reference for ``_kernels.pyx``.

Orthant probabilities of a centred Gaussian are computed by conditioning on
pairs of coordinates.  Along the path ``R(t) = I + t (R - I)`` the derivative
of the positive-orthant probability with respect to ``rho_ij`` is the
bivariate density at the origin times the orthant probability of the other
coordinates conditioned on ``x_i = x_j = 0`` (Plackett's identity).  With the
substitution ``t rho_ij = sin(theta)`` the density factor becomes constant::

    P_N(R) = 2**-N + 1/(2 pi) sum_{i<j} int_0^{asin rho_ij} P_{N-2}(R_c(theta)) d theta

For ``N = 4`` the inner probability is the closed-form bivariate orthant, so
each pair needs a smooth 1-D integral, done here by adaptive Gauss-Kronrod.
"""
from __future__ import annotations

import itertools

import numpy as np

__all__ = ["orthant_batch", "correlator_batch", "GK_NODES", "GK_WEIGHTS", "G_WEIGHTS", "MAX_INTERVALS"]

# 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1]
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss weights sit on the odd Kronrod nodes (indices 1, 3, 5 from either end, and 7)
G_WEIGHTS = np.zeros(15)
G_WEIGHTS[[1, 3, 5]] = _WG[:3]
G_WEIGHTS[[13, 11, 9]] = _WG[:3]
G_WEIGHTS[7] = _WG[3]

MAX_INTERVALS = 4000
TWO_PI = 2.0 * np.pi
PAIRS4 = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)),
          ((1, 2), (0, 3)), ((1, 3), (0, 2)), ((2, 3), (0, 1))]


def _inner_p2(R, pair, rest, sin_theta):
    """Bivariate orthant probability of ``rest`` given ``x_pair = 0`` on the homotopy.

    ``R``: (B, 4, 4); ``sin_theta``: (B, Q) with ``t = sin_theta / rho_ij``.
    """
    i, j = pair
    k, l = rest
    rho = R[:, i, j][:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(rho != 0, sin_theta / np.where(rho != 0, rho, 1.0), 0.0)
    a = sin_theta
    bk0 = t * R[:, k, i][:, None]
    bk1 = t * R[:, k, j][:, None]
    bl0 = t * R[:, l, i][:, None]
    bl1 = t * R[:, l, j][:, None]
    den = 1.0 - a * a

    def form(x0, x1, y0, y1):
        return (x0 * y0 + x1 * y1 - a * (x0 * y1 + x1 * y0)) / den

    ckl = t * R[:, k, l][:, None] - form(bk0, bk1, bl0, bl1)
    ckk = 1.0 - form(bk0, bk1, bk0, bk1)
    cll = 1.0 - form(bl0, bl1, bl0, bl1)
    rc = np.clip(ckl / np.sqrt(ckk * cll), -1.0, 1.0)
    return 0.25 + np.arcsin(rc) / TWO_PI


def _orthant4(R: np.ndarray, abstol: float):
    B = R.shape[0]
    total = np.full(B, 1.0 / 16.0)
    err = np.zeros(B)
    tol_pair = abstol * TWO_PI / len(PAIRS4)
    for pair, rest in PAIRS4:
        upper = np.arcsin(np.clip(R[:, pair[0], pair[1]], -1.0, 1.0))
        length = np.abs(upper)
        # active intervals: (row, lo, hi)
        rows = np.arange(B)
        lo = np.zeros(B)
        hi = upper.copy()
        used = 0
        while rows.size:
            mid = 0.5 * (lo + hi)
            half = 0.5 * (hi - lo)
            theta = mid[:, None] + half[:, None] * GK_NODES[None, :]
            vals = _inner_p2(R[rows], pair, rest, np.sin(theta))
            kron = half * (vals @ GK_WEIGHTS)
            gauss = half * (vals @ G_WEIGHTS)
            e = np.abs(kron - gauss)
            used += rows.size
            span = length[rows]
            allowed = tol_pair * np.abs(hi - lo) / np.where(span > 0, span, 1.0)
            done = (e <= allowed) | (np.abs(hi - lo) < 1e-12) | (used > MAX_INTERVALS * B)
            np.add.at(total, rows[done], kron[done] / TWO_PI)
            np.add.at(err, rows[done], e[done] / TWO_PI)
            keep = ~done
            rows = np.concatenate([rows[keep], rows[keep]])
            lo_k, mid_k, hi_k = lo[keep], mid[keep], hi[keep]
            lo = np.concatenate([lo_k, mid_k])
            hi = np.concatenate([mid_k, hi_k])
    return total, err


def orthant_batch(corr: np.ndarray, abstol: float = 1e-7):
    """Positive-orthant probabilities for a batch of correlation matrices (N <= 4)."""
    corr = np.asarray(corr, dtype=float)
    B, N, _ = corr.shape
    if N == 1:
        return np.full(B, 0.5), np.zeros(B)
    if N == 2:
        return 0.25 + np.arcsin(np.clip(corr[:, 0, 1], -1, 1)) / TWO_PI, np.zeros(B)
    if N == 3:
        s = sum(np.arcsin(np.clip(corr[:, i, j], -1, 1)) for i, j in ((0, 1), (0, 2), (1, 2)))
        return 0.125 + s / (2.0 * TWO_PI), np.zeros(B)
    if N == 4:
        return _orthant4(corr, abstol)
    raise ValueError("kernel handles at most four coordinates")


def _to_correlation(cov: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diagonal(cov, axis1=1, axis2=2))
    return cov / (d[:, :, None] * d[:, None, :])


def correlator_batch(cov: np.ndarray, abstol: float = 1e-7):
    """``E[prod_i sign(x_i)]`` for a batch of covariances (N <= 4).

    Sum over orthants with the first sign fixed to ``+``; central symmetry
    supplies the other half.  For odd ``N`` the two halves cancel exactly.
    """
    cov = np.asarray(cov, dtype=float)
    B, N, _ = cov.shape
    R = _to_correlation(cov)
    if N % 2:
        return np.zeros(B), np.zeros(B)
    if N == 2:
        return (2.0 / np.pi) * np.arcsin(np.clip(R[:, 0, 1], -1, 1)), np.zeros(B)
    total = np.zeros(B)
    err = np.zeros(B)
    for tail in itertools.product((1.0, -1.0), repeat=N - 1):
        signs = np.array((1.0,) + tail)
        p, e = orthant_batch(R * np.outer(signs, signs), abstol / 2**N)
        total += 2.0 * np.prod(signs) * p
        err += 2.0 * e
    return total, err
