"""Orthant probabilities and sign correlators of centred Gaussians.

``method="conditioning"`` (default) is the pairwise-conditioning quadrature of
:mod:`combbell._kernels_py`: closed forms for up to three coordinates, a
smooth 1-D integral per coordinate pair for four, and recursion above that.
``"lattice"`` is Genz's separation-of-variables transform on a randomly
shifted rank-1 lattice, and ``"montecarlo"`` plain sampling; both are kept
as independent cross-checks and report a standard error.
"""
from __future__ import annotations

import itertools
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr, ndtri

from . import kernels
from .errors import CovarianceError, DimensionError, OrthantAccuracyError

__all__ = [
    "OrthantEstimate",
    "orthant_estimate",
    "orthant_probability",
    "sign_correlator",
    "sign_correlators",
    "bivariate_orthant",
    "METHODS",
    "DEFAULT_ABSTOL",
]

METHODS = ("conditioning", "lattice", "montecarlo")
DEFAULT_ABSTOL = 1e-7
_LATTICE_GENERATORS = np.sqrt(np.array([2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0]))


class OrthantEstimate(NamedTuple):
    value: float
    error: float


def bivariate_orthant(rho: float) -> float:
    """``P(x > 0, y > 0)`` for unit variances and correlation ``rho``."""
    return 0.25 + np.arcsin(np.clip(rho, -1.0, 1.0)) / (2.0 * np.pi)


def _correlation(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise CovarianceError("covariance has non-finite entries")
    diag = np.diag(cov)
    if np.any(diag <= 0):
        raise CovarianceError("covariance has a non-positive variance")
    d = np.sqrt(diag)
    R = cov / np.outer(d, d)
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    if np.linalg.eigvalsh(R)[0] <= 0:
        raise CovarianceError("covariance is not positive definite")
    return R


def _signed(R: np.ndarray, signs: Sequence[int]) -> np.ndarray:
    s = np.asarray(signs, dtype=float)
    if s.shape != (R.shape[0],) or not np.all(np.abs(s) == 1):
        raise DimensionError(f"signs must be {R.shape[0]} entries of +-1, got {signs}")
    return R * np.outer(s, s)


def _conditional_correlation(R: np.ndarray, pair: tuple[int, int], t: float) -> np.ndarray:
    """Correlation of the other coordinates given ``x_pair = 0`` on ``I + t (R - I)``."""
    n = R.shape[0]
    rest = [k for k in range(n) if k not in pair]
    Rt = np.eye(n) + t * (R - np.eye(n))
    A = Rt[np.ix_(pair, pair)]
    B = Rt[np.ix_(rest, pair)]
    C = Rt[np.ix_(rest, rest)] - B @ np.linalg.solve(A, B.T)
    d = np.sqrt(np.diag(C))
    C = C / np.outer(d, d)
    np.fill_diagonal(C, 1.0)
    return np.clip(C, -1.0, 1.0)


def _conditioning(R: np.ndarray, abstol: float) -> OrthantEstimate:
    n = R.shape[0]
    if n <= 4:
        value, err = kernels.orthant_batch(R[None], abstol)
        return OrthantEstimate(float(value[0]), float(err[0]))
    pairs = list(itertools.combinations(range(n), 2))
    tol = abstol * 2.0 * np.pi / len(pairs)
    total = 2.0**-n
    err = 0.0
    for pair in pairs:
        rho = R[pair]
        upper = float(np.arcsin(np.clip(rho, -1.0, 1.0)))
        if upper == 0.0:
            continue
        inner_err = [0.0]

        def integrand(theta, pair=pair, rho=rho):
            inner = _conditioning(_conditional_correlation(R, pair, np.sin(theta) / rho), tol / abs(upper))
            inner_err[0] = max(inner_err[0], inner.error)
            return inner.value

        value, qerr = quad(integrand, 0.0, upper, epsabs=tol, epsrel=0.0, limit=200)
        total += value / (2.0 * np.pi)
        err += (qerr + inner_err[0] * abs(upper)) / (2.0 * np.pi)
    return OrthantEstimate(total, err)


def _lattice(R: np.ndarray, points: int, shifts: int, seed: int) -> OrthantEstimate:
    n = R.shape[0]
    if n - 1 > _LATTICE_GENERATORS.size:
        raise DimensionError(f"lattice rule supports at most {_LATTICE_GENERATORS.size + 1} coordinates")
    L = np.linalg.cholesky(R)
    rng = np.random.default_rng(seed)
    k = np.arange(1, points + 1)[:, None]
    estimates = []
    for _ in range(shifts):
        shift = rng.random(n - 1)
        # baker's transform of the shifted lattice
        w = np.abs(2.0 * ((k * _LATTICE_GENERATORS[: n - 1] + shift) % 1.0) - 1.0)
        z = np.zeros((points, n))
        f = np.full(points, 0.5)
        z[:, 0] = ndtri(0.5 + 0.5 * w[:, 0]) if n > 1 else 0.0
        for i in range(1, n):
            lower = -(z[:, :i] @ L[i, :i]) / L[i, i]
            mass = ndtr(-lower)
            f *= mass
            if i < n - 1:
                z[:, i] = ndtri(np.clip(ndtr(lower) + w[:, i] * mass, 1e-300, 1.0 - 1e-16))
        estimates.append(f.mean())
    estimates = np.array(estimates)
    return OrthantEstimate(float(estimates.mean()), float(estimates.std(ddof=1) / np.sqrt(shifts)))


def _montecarlo(R: np.ndarray, samples: int, seed: int) -> OrthantEstimate:
    rng = np.random.default_rng(seed)
    L = np.linalg.cholesky(R)
    hits = 0
    done = 0
    chunk = 1_000_000
    while done < samples:
        m = min(chunk, samples - done)
        x = rng.standard_normal((m, R.shape[0])) @ L.T
        hits += int(np.count_nonzero(np.all(x > 0, axis=1)))
        done += m
    p = hits / samples
    return OrthantEstimate(p, float(np.sqrt(max(p * (1 - p), 1.0 / samples) / samples)))


def orthant_estimate(
    cov,
    signs: Sequence[int] | None = None,
    method: str = "conditioning",
    abstol: float = DEFAULT_ABSTOL,
    samples: int = 10_000_000,
    points: int = 8192,
    shifts: int = 10,
    seed: int = 0,
) -> OrthantEstimate:
    """Probability of the orthant ``sign(x_i) = signs[i]`` with its error estimate.

    For ``"conditioning"`` the error is a quadrature bound and
    :class:`OrthantAccuracyError` is raised if it exceeds ``abstol``.  The
    sampling methods return a standard error and never raise on accuracy.
    """
    R = _correlation(cov)
    if signs is None:
        signs = np.ones(R.shape[0])
    R = _signed(R, signs)
    n = R.shape[0]
    if n == 1:
        return OrthantEstimate(0.5, 0.0)
    if n == 2:
        return OrthantEstimate(float(bivariate_orthant(R[0, 1])), 0.0)
    if method == "conditioning":
        est = _conditioning(R, abstol)
        if not est.error <= abstol:
            raise OrthantAccuracyError(
                f"orthant integral missed abstol={abstol:g} (error estimate {est.error:.3g})",
                est.value,
                est.error,
            )
        return est
    if method == "lattice":
        return _lattice(R, points, shifts, seed)
    if method == "montecarlo":
        return _montecarlo(R, samples, seed)
    raise ValueError(f"unknown orthant method {method!r}; choose from {METHODS}")


def orthant_probability(cov, signs: Sequence[int] | None = None, **kwargs) -> float:
    return orthant_estimate(cov, signs, **kwargs).value


def sign_correlators(covs: np.ndarray, abstol: float = DEFAULT_ABSTOL) -> np.ndarray:
    """``E[prod_i sign(x_i)]`` for a batch of covariances, shape (B, N, N)."""
    covs = np.asarray(covs, dtype=float)
    if covs.ndim != 3 or covs.shape[1] != covs.shape[2]:
        raise DimensionError(f"expected a (B, N, N) stack of covariances, got {covs.shape}")
    B, n, _ = covs.shape
    if n <= 4:
        values, errors = kernels.correlator_batch(covs, abstol)
        bad = np.flatnonzero(~(errors <= abstol))
        if bad.size:
            b = int(bad[0])
            raise OrthantAccuracyError(
                f"sign correlator missed abstol={abstol:g} (error estimate {errors[b]:.3g})",
                float(values[b]),
                float(errors[b]),
            )
        return values
    out = np.empty(B)
    for b in range(B):
        out[b] = sign_correlator(covs[b], abstol)
    return out


def sign_correlator(cov, abstol: float = DEFAULT_ABSTOL) -> float:
    """``E[prod_i sign(x_i)]``: signed sum of orthant probabilities, halved by central symmetry."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    if n <= 4:
        return float(sign_correlators(cov[None], abstol)[0])
    _correlation(cov)
    if n % 2:
        return 0.0
    total = 0.0
    for tail in itertools.product((1, -1), repeat=n - 1):
        signs = (1,) + tail
        total += 2.0 * np.prod(signs) * orthant_estimate(cov, signs, abstol=abstol / 2**n).value
    return total
