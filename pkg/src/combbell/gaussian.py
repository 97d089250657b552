"""Signed mixtures of centred Gaussian Wigner functions.

Every term is a *normalised* Gaussian ``pi**(-d/2) det(g)**(-1/2) exp(-r.T g^-1 r)``
with a signed weight, so the integral of the mixture is the sum of weights.
Variables are interleaved per mode, ``(q1, p1, q2, p2, ...)``, and the vacuum
has covariance ``I``.  Non-Gaussian states (photon-subtracted ones) appear
as mixtures with negative weights.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import CovarianceError, DimensionError, RangeError, UnphysicalHeraldingError

__all__ = [
    "GaussianTerm",
    "GaussianMixture",
    "ModeLinearMap",
    "symplectic_form",
    "quadrature_indices",
    "switching_matrix",
    "vacuum",
    "squeezed_covariance",
    "beam_splitter",
    "rotation",
    "loss_map",
    "apply_map",
    "apply_loss",
    "multiply_onoff_povm",
    "marginalize",
    "marginalize_modes",
    "normalize",
    "evaluate",
    "is_physical",
    "product_state",
    "mean_photon_number",
]

SYMMETRY_TOL = 1e-12
MIN_EIGENVALUE = 1e-12
MAX_SQUEEZING = 20.0
LOSS_CONVENTIONS = ("intensity", "literal")
MARGINAL_CHECK_TOL = 1e-6


@dataclass(frozen=True)
class GaussianTerm:
    weight: float
    covariance: np.ndarray


class GaussianMixture:
    """Immutable signed mixture of zero-mean Gaussians of a common dimension."""

    __slots__ = ("_weights", "_covs")

    def __init__(self, weights, covariances, *, check: bool = True):
        w = np.array(weights, dtype=float).reshape(-1)
        c = np.array(covariances, dtype=float)
        if c.ndim == 2:
            c = c[None]
        if c.ndim != 3 or c.shape[1] != c.shape[2] or c.shape[0] != w.shape[0]:
            raise DimensionError(
                f"need one square covariance per weight, got {w.shape} weights and {c.shape}"
            )
        if w.size == 0:
            raise DimensionError("a mixture needs at least one term")
        if check:
            _check_terms(w, c)
        w.flags.writeable = False
        c.flags.writeable = False
        self._weights = w
        self._covs = c

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def covariances(self) -> np.ndarray:
        return self._covs

    @property
    def dim(self) -> int:
        return self._covs.shape[1]

    @property
    def n_modes(self) -> int:
        if self.dim % 2:
            raise DimensionError(f"{self.dim} variables do not form whole modes")
        return self.dim // 2

    @property
    def total_weight(self) -> float:
        return float(np.sum(self._weights))

    @property
    def normalized(self) -> bool:
        return abs(self.total_weight - 1.0) <= 1e-10

    @property
    def terms(self) -> list[GaussianTerm]:
        return [GaussianTerm(float(w), c) for w, c in zip(self._weights, self._covs)]

    def __len__(self) -> int:
        return self._weights.size

    def __iter__(self) -> Iterator[GaussianTerm]:
        return iter(self.terms)

    def __repr__(self) -> str:
        return f"GaussianMixture(terms={len(self)}, dim={self.dim}, total_weight={self.total_weight:.6g})"

    def concat(self, other: "GaussianMixture") -> "GaussianMixture":
        if other.dim != self.dim:
            raise DimensionError("cannot concatenate mixtures of different dimension")
        return GaussianMixture(
            np.concatenate([self._weights, other._weights]),
            np.concatenate([self._covs, other._covs]),
            check=False,
        )

    def scaled(self, factor: float) -> "GaussianMixture":
        return GaussianMixture(self._weights * factor, self._covs, check=False)


def _check_terms(weights: np.ndarray, covs: np.ndarray) -> None:
    if not np.all(np.isfinite(weights)) or np.any(weights == 0):
        raise CovarianceError("weights must be finite and nonzero")
    if not np.all(np.isfinite(covs)):
        raise CovarianceError("covariance has non-finite entries")
    asym = np.max(np.abs(covs - np.swapaxes(covs, 1, 2)))
    scale = max(1.0, float(np.max(np.abs(covs))))
    if asym > SYMMETRY_TOL * scale:
        raise CovarianceError(f"covariance not symmetric (max deviation {asym:.3g})")
    min_eig = np.min(np.linalg.eigvalsh(covs))
    if min_eig <= MIN_EIGENVALUE:
        raise CovarianceError(f"covariance not positive definite (min eigenvalue {min_eig:.3g})")


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _mixture(weights, covs) -> GaussianMixture:
    return GaussianMixture(weights, _sym(covs))


def symplectic_form(n: int) -> np.ndarray:
    return np.kron(np.eye(n), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def quadrature_indices(modes: Iterable[int]) -> list[int]:
    """Variable indices ``[q_m, p_m, ...]`` of the given modes."""
    return [2 * m + k for m in modes for k in (0, 1)]


def switching_matrix(n: int) -> np.ndarray:
    """Permutation taking ``(q1, p1, ..., qn, pn)`` to ``(p1..pn, q1..qn)``.

    Only needed to compare with block-ordered layouts; internally the
    interleaved order is used throughout.
    """
    perm = np.zeros((2 * n, 2 * n))
    for i in range(n):
        perm[i, 2 * i + 1] = 1.0
        perm[n + i, 2 * i] = 1.0
    return perm


def _check_modes(modes: Sequence[int], n: int) -> list[int]:
    modes = [int(m) for m in modes]
    if len(set(modes)) != len(modes):
        raise DimensionError(f"mode indices must be distinct, got {modes}")
    for m in modes:
        if not 0 <= m < n:
            raise DimensionError(f"mode index {m} out of range for {n} modes")
    return modes


def vacuum(n: int) -> GaussianMixture:
    if int(n) != n or n < 1:
        raise RangeError(f"vacuum needs n >= 1 modes, got {n}")
    return GaussianMixture([1.0], np.eye(2 * n)[None])


def squeezed_covariance(s: float) -> np.ndarray:
    """``diag(e^{2s}, e^{-2s})``; positive ``s`` squeezes ``p``."""
    if not np.isfinite(s) or abs(s) > MAX_SQUEEZING:
        raise RangeError(f"squeezing parameter {s} outside [-{MAX_SQUEEZING}, {MAX_SQUEEZING}]")
    return np.diag([np.exp(2.0 * s), np.exp(-2.0 * s)])


def product_state(blocks: Sequence[np.ndarray]) -> GaussianMixture:
    """Single-term state whose covariance is the direct sum of 2x2 blocks."""
    n = len(blocks)
    cov = np.zeros((2 * n, 2 * n))
    for i, b in enumerate(blocks):
        cov[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = b
    return GaussianMixture([1.0], cov[None])


@dataclass(frozen=True)
class ModeLinearMap:
    """Linear action on quadrature vectors.

    ``kind`` is ``"symplectic"`` (square, ``S Omega S^T = Omega``),
    ``"orthogonal-embedding"`` (orthonormal rows, maps ``n`` modes onto
    ``k <= n``) or ``"cp"`` (``g -> L g L^T + G`` with ``G >= 0``).
    """

    matrix: np.ndarray
    kind: str = "symplectic"
    noise: Optional[np.ndarray] = None

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] % 2 or mat.shape[1] % 2:
            raise DimensionError(f"map must act on whole modes, got shape {mat.shape}")
        if self.kind == "symplectic":
            if mat.shape[0] != mat.shape[1]:
                raise DimensionError("symplectic maps are square")
            omega = symplectic_form(mat.shape[0] // 2)
            if np.max(np.abs(mat @ omega @ mat.T - omega)) > 1e-12:
                raise RangeError("matrix is not symplectic")
        elif self.kind == "orthogonal-embedding":
            if mat.shape[0] > mat.shape[1]:
                raise DimensionError("an embedding cannot add modes")
            if np.max(np.abs(mat @ mat.T - np.eye(mat.shape[0]))) > 1e-10:
                raise RangeError("embedding rows are not orthonormal")
        elif self.kind == "cp":
            if mat.shape[0] != mat.shape[1]:
                raise DimensionError("CP maps here are square")
            noise = np.zeros_like(mat) if self.noise is None else np.array(self.noise, dtype=float)
            if noise.shape != mat.shape:
                raise DimensionError("noise matrix must match the map")
            if np.min(np.linalg.eigvalsh(_sym(noise))) < -1e-12:
                raise RangeError("CP noise matrix must be positive semidefinite")
            noise.flags.writeable = False
            object.__setattr__(self, "noise", noise)
        else:
            raise RangeError(f"unknown map kind {self.kind!r}")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    @property
    def in_modes(self) -> int:
        return self.matrix.shape[1] // 2

    @property
    def out_modes(self) -> int:
        return self.matrix.shape[0] // 2


def beam_splitter(T: float) -> ModeLinearMap:
    if not 0.0 <= T <= 1.0:
        raise RangeError(f"transmissivity {T} outside [0, 1]")
    t, r = np.sqrt(T), np.sqrt(1.0 - T)
    mat = np.array(
        [
            [t, 0.0, r, 0.0],
            [0.0, t, 0.0, r],
            [-r, 0.0, t, 0.0],
            [0.0, -r, 0.0, t],
        ]
    )
    return ModeLinearMap(mat)


def rotation(phi: float) -> ModeLinearMap:
    c, s = np.cos(phi), np.sin(phi)
    return ModeLinearMap(np.array([[c, s], [-s, c]]))


def loss_map(eta: float, n: int = 1, convention: str = "intensity") -> ModeLinearMap:
    """Pure-loss channel on ``n`` modes.

    ``"intensity"`` gives ``g -> eta g + (1 - eta) I``; ``"literal"`` uses
    ``L = eta I`` and so ``g -> eta**2 g + (1 - eta) I``.
    """
    if not 0.0 <= eta <= 1.0:
        raise RangeError(f"efficiency {eta} outside [0, 1]")
    if convention == "intensity":
        gain = np.sqrt(eta)
    elif convention == "literal":
        gain = eta
    else:
        raise RangeError(f"unknown loss convention {convention!r}; use one of {LOSS_CONVENTIONS}")
    eye = np.eye(2 * n)
    return ModeLinearMap(gain * eye, kind="cp", noise=(1.0 - eta) * eye)


def apply_map(state: GaussianMixture, lmap: ModeLinearMap, modes: Sequence[int]) -> GaussianMixture:
    """Apply ``lmap`` to the listed modes, identity elsewhere."""
    n = state.n_modes
    modes = _check_modes(modes, n)
    if len(modes) != lmap.in_modes:
        raise DimensionError(f"map acts on {lmap.in_modes} modes but {len(modes)} were given")
    idx = quadrature_indices(modes)
    covs = state.covariances
    if lmap.kind == "orthogonal-embedding":
        if sorted(modes) != list(range(n)):
            raise DimensionError("an embedding must act on every mode of the state")
        S = lmap.matrix
        new = np.einsum("ij,tjk,lk->til", S, covs[:, idx][:, :, idx], S)
        return _mixture(state.weights, new)
    full = np.eye(2 * n)
    full[np.ix_(idx, idx)] = lmap.matrix
    new = np.einsum("ij,tjk,lk->til", full, covs, full)
    if lmap.kind == "cp":
        noise = np.zeros((2 * n, 2 * n))
        noise[np.ix_(idx, idx)] = lmap.noise
        new = new + noise
    return _mixture(state.weights, new)


def apply_loss(
    state: GaussianMixture, eta: float, modes: Sequence[int], convention: str = "intensity"
) -> GaussianMixture:
    modes = list(modes)
    if not modes:
        return state
    return apply_map(state, loss_map(eta, len(modes), convention), modes)


def multiply_onoff_povm(state: GaussianMixture, mode: int) -> GaussianMixture:
    """Multiply by the Wigner symbol of an on-off click, ``(1 - 2 exp(-q^2 - p^2))/(2 pi)``.

    The ``2 pi`` overlap normalisation is folded in, so integrating the result
    over the measured mode yields the click probability.  Each term spawns
    itself plus a term whose inverse covariance gains the identity on
    ``mode``; in covariance form that is a rank-2 Woodbury update.  The new
    terms are appended after the originals.
    """
    n = state.n_modes
    (mode,) = _check_modes([mode], n)
    idx = quadrature_indices([mode])
    covs = state.covariances
    block = covs[:, idx][:, :, idx] + np.eye(2)
    cross = covs[:, :, idx]
    try:
        solved = np.linalg.solve(block, np.swapaxes(cross, 1, 2))
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("on-off update failed: singular mode block") from exc
    updated = covs - cross @ solved
    scale = 1.0 / np.sqrt(np.linalg.det(block))
    weights = np.concatenate([state.weights, -2.0 * state.weights * scale])
    return _mixture(weights, np.concatenate([covs, updated]))


def marginalize(state: GaussianMixture, keep: Sequence[int]) -> GaussianMixture:
    """Integrate out every quadrature variable not listed in ``keep``.

    The dropped block is integrated in inverse-covariance form: the kept
    block of the precision matrix is reduced by its Schur complement and each
    weight picks up ``1/sqrt(det)`` of the dropped block.  For normalised
    terms that weight factor is exactly one and the inverse Schur complement
    is exactly the kept covariance block.  Both identities are checked to
    ``MARGINAL_CHECK_TOL`` and the exact values are returned, so large
    cancelling weights do not pick up round-off.
    """
    d = state.dim
    keep = [int(k) for k in keep]
    if not keep:
        raise DimensionError("must keep at least one variable")
    if len(set(keep)) != len(keep) or any(not 0 <= k < d for k in keep):
        raise DimensionError(f"invalid variable list {keep} for dimension {d}")
    drop = [i for i in range(d) if i not in set(keep)]
    kept = state.covariances[:, keep][:, :, keep]
    if not drop:
        return GaussianMixture(state.weights, kept, check=False)
    covs = state.covariances
    try:
        chol = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("covariance not positive definite during marginalisation") from exc
    logdet_cov = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
    prec = _sym(np.linalg.inv(covs))
    g_a = prec[:, drop][:, :, drop]
    g_s = prec[:, keep][:, :, keep]
    sigma = prec[:, drop][:, :, keep]
    sign_a, logdet_a = np.linalg.slogdet(g_a)
    if np.any(sign_a <= 0):
        raise CovarianceError("integrated block of the precision matrix is singular")
    schur = _sym(g_s - np.swapaxes(sigma, 1, 2) @ np.linalg.solve(g_a, sigma))
    sign_s, logdet_s = np.linalg.slogdet(schur)
    if np.any(sign_s <= 0):
        raise CovarianceError("Schur complement not positive definite")
    factor = np.exp(-0.5 * (logdet_cov + logdet_a + logdet_s))
    via_schur = np.linalg.inv(schur)
    scale = np.max(np.abs(kept), axis=(1, 2))
    residual = np.max(np.abs(via_schur - kept), axis=(1, 2)) / scale
    if np.any(np.abs(factor - 1.0) > MARGINAL_CHECK_TOL) or np.any(residual > MARGINAL_CHECK_TOL):
        raise CovarianceError(
            "marginalisation is ill-conditioned: Schur route disagrees with the kept block "
            f"(weight factor off by {np.max(np.abs(factor - 1.0)):.2e}, covariance by {np.max(residual):.2e})"
        )
    return _mixture(state.weights, kept)


def marginalize_modes(state: GaussianMixture, keep_modes: Sequence[int]) -> GaussianMixture:
    modes = _check_modes(keep_modes, state.n_modes)
    return marginalize(state, quadrature_indices(modes))


def normalize(state: GaussianMixture) -> tuple[GaussianMixture, float]:
    """Divide weights by their sum; return the new state and the old sum.

    After an on-off overlap the sum is the heralding probability.  Sums that
    are not positive beyond round-off are rejected.
    """
    total = state.total_weight
    scale = float(np.sum(np.abs(state.weights)))
    if not total > 1e-13 * scale:
        raise UnphysicalHeraldingError(
            f"total weight {total:.3e} is not positive; the heralding event never occurs"
        )
    return GaussianMixture(state.weights / total, state.covariances, check=False), total


def evaluate(state: GaussianMixture, point) -> np.ndarray | float:
    """Wigner value(s) at ``point`` (shape ``(..., dim)``)."""
    r = np.asarray(point, dtype=float)
    if r.shape[-1] != state.dim:
        raise DimensionError(f"points need {state.dim} coordinates, got {r.shape[-1]}")
    flat = r.reshape(-1, state.dim)
    prec = np.linalg.inv(state.covariances)
    _, logdet = np.linalg.slogdet(state.covariances)
    pref = state.weights * np.exp(-0.5 * logdet) * np.pi ** (-state.dim / 2.0)
    quad = np.einsum("pi,tij,pj->tp", flat, prec, flat)
    # fixed-order sum over terms for reproducibility
    values = np.zeros(flat.shape[0])
    for k in range(len(state)):
        values = values + pref[k] * np.exp(-quad[k])
    values = values.reshape(r.shape[:-1])
    return float(values) if values.ndim == 0 else values


def is_physical(cov: np.ndarray, tol: float = 1e-10) -> bool:
    """Robertson–Schrödinger check ``g + i Omega >= 0`` (vacuum = identity)."""
    cov = np.asarray(cov, dtype=float)
    omega = symplectic_form(cov.shape[0] // 2)
    return bool(np.min(np.linalg.eigvalsh(cov + 1j * omega)) >= -tol)


def mean_photon_number(state: GaussianMixture, modes: Sequence[int] | None = None) -> float:
    """Total mean photon number of ``modes`` (all by default): ``sum_k w_k (tr g_k - 2n) / 4``."""
    modes = range(state.n_modes) if modes is None else modes
    idx = quadrature_indices(_check_modes(modes, state.n_modes))
    traces = np.trace(state.covariances[:, idx][:, :, idx], axis1=1, axis2=2)
    total = 0.0
    for w, tr in zip(state.weights, traces):
        total += w * (tr - len(idx)) / 4.0
    return float(total)
