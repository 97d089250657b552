# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled orthant kernels.  Same algorithm and interface as ``_kernels_py``."""
import numpy as np

from libc.math cimport asin, sin, sqrt, fabs, M_PI

cdef double[15] GK_X
cdef double[15] GK_W
cdef double[15] G_W

cdef double[8] _XGK = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
]
cdef double[8] _WGK = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
]
cdef double[4] _WG = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
]

cdef int _k
for _k in range(7):
    GK_X[_k] = -_XGK[_k]
    GK_X[14 - _k] = _XGK[_k]
    GK_W[_k] = _WGK[_k]
    GK_W[14 - _k] = _WGK[_k]
    G_W[_k] = 0.0
    G_W[14 - _k] = 0.0
GK_X[7] = 0.0
GK_W[7] = _WGK[7]
G_W[7] = _WG[3]
G_W[1] = _WG[0]
G_W[13] = _WG[0]
G_W[3] = _WG[1]
G_W[11] = _WG[1]
G_W[5] = _WG[2]
G_W[9] = _WG[2]

cdef enum:
    STACK = 64
MAX_INTERVALS = 4000
cdef int _MAX_INTERVALS = 4000
cdef double TWO_PI = 2.0 * M_PI
cdef int[6][4] PAIRS = [[0, 1, 2, 3], [0, 2, 1, 3], [0, 3, 1, 2],
                        [1, 2, 0, 3], [1, 3, 0, 2], [2, 3, 0, 1]]


cdef inline double _clip(double x) noexcept nogil:
    if x > 1.0:
        return 1.0
    if x < -1.0:
        return -1.0
    return x


cdef inline double _inner_p2(double[4][4] R, int i, int j, int k, int l,
                             double sin_theta) noexcept nogil:
    cdef double rho = R[i][j]
    cdef double t = sin_theta / rho if rho != 0.0 else 0.0
    cdef double a = sin_theta
    cdef double bk0 = t * R[k][i], bk1 = t * R[k][j]
    cdef double bl0 = t * R[l][i], bl1 = t * R[l][j]
    cdef double den = 1.0 - a * a
    cdef double ckl = t * R[k][l] - (bk0 * bl0 + bk1 * bl1 - a * (bk0 * bl1 + bk1 * bl0)) / den
    cdef double ckk = 1.0 - (bk0 * bk0 + bk1 * bk1 - 2.0 * a * bk0 * bk1) / den
    cdef double cll = 1.0 - (bl0 * bl0 + bl1 * bl1 - 2.0 * a * bl0 * bl1) / den
    return 0.25 + asin(_clip(ckl / sqrt(ckk * cll))) / TWO_PI


cdef double _pair_integral(double[4][4] R, int p, double tol, double* err_out,
                           int* budget) noexcept nogil:
    cdef int i = PAIRS[p][0], j = PAIRS[p][1], k = PAIRS[p][2], l = PAIRS[p][3]
    cdef double upper = asin(_clip(R[i][j]))
    cdef double length = fabs(upper)
    cdef double[STACK] lo_s
    cdef double[STACK] hi_s
    cdef int top = 0, q
    cdef double lo, hi, mid, half, v, kron, gauss, e, total = 0.0, err = 0.0
    if length == 0.0:
        err_out[0] = 0.0
        return 0.0
    lo_s[0] = 0.0
    hi_s[0] = upper
    top = 1
    while top > 0:
        top -= 1
        lo = lo_s[top]
        hi = hi_s[top]
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        kron = 0.0
        gauss = 0.0
        for q in range(15):
            v = _inner_p2(R, i, j, k, l, sin(mid + half * GK_X[q]))
            kron += GK_W[q] * v
            gauss += G_W[q] * v
        kron *= half
        gauss *= half
        e = fabs(kron - gauss)
        budget[0] -= 1
        if (e <= tol * fabs(hi - lo) / length or fabs(hi - lo) < 1e-12
                or budget[0] <= 0 or top + 2 > STACK):
            total += kron
            err += e
        else:
            lo_s[top] = mid
            hi_s[top] = hi
            lo_s[top + 1] = lo
            hi_s[top + 1] = mid
            top += 2
    err_out[0] = err
    return total


cdef double _orthant4(double[4][4] R, double abstol, double* err_out) noexcept nogil:
    cdef double total = 1.0 / 16.0, err = 0.0, e = 0.0
    cdef double tol_pair = abstol * TWO_PI / 6.0
    cdef int budget = _MAX_INTERVALS
    cdef int p
    for p in range(6):
        total += _pair_integral(R, p, tol_pair, &e, &budget) / TWO_PI
        err += e / TWO_PI
    err_out[0] = err
    return total


def orthant_batch(corr, double abstol=1e-7):
    """Positive-orthant probabilities for a batch of correlation matrices (N <= 4)."""
    cdef double[:, :, ::1] c = np.ascontiguousarray(corr, dtype=np.float64)
    cdef Py_ssize_t B = c.shape[0], N = c.shape[1], b
    out = np.empty(B)
    errs = np.zeros(B)
    cdef double[::1] o = out
    cdef double[::1] er = errs
    cdef double[4][4] R
    cdef int x, y
    cdef double e
    if N == 1:
        out[:] = 0.5
    elif N == 2:
        for b in range(B):
            o[b] = 0.25 + asin(_clip(c[b, 0, 1])) / TWO_PI
    elif N == 3:
        for b in range(B):
            o[b] = 0.125 + (asin(_clip(c[b, 0, 1])) + asin(_clip(c[b, 0, 2]))
                            + asin(_clip(c[b, 1, 2]))) / (2.0 * TWO_PI)
    elif N == 4:
        with nogil:
            for b in range(B):
                for x in range(4):
                    for y in range(4):
                        R[x][y] = c[b, x, y]
                o[b] = _orthant4(R, abstol, &e)
                er[b] = e
    else:
        raise ValueError("kernel handles at most four coordinates")
    return out, errs


def correlator_batch(cov, double abstol=1e-7):
    """``E[prod_i sign(x_i)]`` for a batch of covariances (N <= 4)."""
    cdef double[:, :, ::1] c = np.ascontiguousarray(cov, dtype=np.float64)
    cdef Py_ssize_t B = c.shape[0], N = c.shape[1], b
    out = np.zeros(B)
    errs = np.zeros(B)
    cdef double[::1] o = out
    cdef double[::1] er = errs
    cdef double[4][4] R
    cdef double[4] d
    cdef double[4] s
    cdef double tol, e, p, total, etot, sgn
    cdef int x, y, pattern
    if N > 4:
        raise ValueError("kernel handles at most four coordinates")
    if N % 2:
        # P(s) = P(-s) with opposite sign products: odd correlators vanish
        return out, errs
    tol = abstol / (1 << N)
    with nogil:
        for b in range(B):
            for x in range(N):
                d[x] = sqrt(c[b, x, x])
            if N == 2:
                o[b] = (2.0 / M_PI) * asin(_clip(c[b, 0, 1] / (d[0] * d[1])))
                continue
            total = 0.0
            etot = 0.0
            # first sign fixed to +; party x is - when bit N-1-x of pattern is set
            for pattern in range(1 << (N - 1)):
                s[0] = 1.0
                sgn = 1.0
                for x in range(1, N):
                    if (pattern >> (N - 1 - x)) & 1:
                        s[x] = -1.0
                        sgn = -sgn
                    else:
                        s[x] = 1.0
                for x in range(N):
                    for y in range(N):
                        R[x][y] = s[x] * s[y] * c[b, x, y] / (d[x] * d[y])
                p = _orthant4(R, tol, &e)
                total += 2.0 * sgn * p
                etot += 2.0 * e
            o[b] = total
            er[b] = etot
    return out, errs
