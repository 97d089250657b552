"""Coarse-graining of supermodes into detector-pixel (party) modes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DimensionError, EmptyPixelError, RangeError
from .gaussian import GaussianMixture, ModeLinearMap, apply_loss, apply_map, marginalize_modes
from .jsa import SupermodeBasis

__all__ = ["PixelPartition", "PixelMap", "build_pixel_map", "to_pixels", "even_boundaries", "lo_profile"]

DEFAULT_LO_WIDTH = 22.0


def even_boundaries(teeth_count: int, party_count: int) -> tuple[int, ...]:
    edges = np.rint(np.linspace(0, teeth_count, party_count + 1)).astype(int)
    return tuple(int(e) for e in edges)


@dataclass(frozen=True)
class PixelPartition:
    """How the comb is split among parties and the LO envelope each sees.

    ``boundaries`` are ``N + 1`` tooth indices; pixel ``i`` collects teeth
    ``boundaries[i] <= m < boundaries[i + 1]``.  ``lo_center=None`` puts the
    LO at the middle of the grid.
    """

    teeth_count: int
    party_count: int = 2
    boundaries: Optional[tuple[int, ...]] = None
    lo_center: Optional[float] = None
    lo_width: float = DEFAULT_LO_WIDTH

    def __post_init__(self):
        if self.party_count < 1:
            raise RangeError(f"party_count must be >= 1, got {self.party_count}")
        if not self.lo_width > 0:
            raise RangeError(f"LO width must be positive, got {self.lo_width}")
        bounds = self.boundaries
        if bounds is None:
            bounds = even_boundaries(self.teeth_count, self.party_count)
        bounds = tuple(int(b) for b in bounds)
        if len(bounds) != self.party_count + 1:
            raise ConfigurationError(
                f"need {self.party_count + 1} boundaries for {self.party_count} pixels, got {len(bounds)}"
            )
        if bounds[0] != 0 or bounds[-1] != self.teeth_count:
            raise ConfigurationError(f"boundaries must run from 0 to {self.teeth_count}, got {bounds}")
        if any(b >= c for b, c in zip(bounds, bounds[1:])):
            raise ConfigurationError(f"boundaries must be strictly increasing, got {bounds}")
        object.__setattr__(self, "boundaries", bounds)

    @property
    def center(self) -> float:
        return (self.teeth_count - 1) / 2.0 if self.lo_center is None else float(self.lo_center)


def lo_profile(partition: PixelPartition) -> np.ndarray:
    m = np.arange(partition.teeth_count, dtype=float)
    return np.exp(-((m - partition.center) ** 2) / (2.0 * partition.lo_width**2))


@dataclass(frozen=True)
class PixelMap:
    """``projection`` holds the raw normalised overlaps (N x K); ``completion``
    is K x K orthogonal with the orthonormalised pixel modes as first N rows."""

    projection: np.ndarray
    completion: np.ndarray

    @property
    def party_count(self) -> int:
        return self.projection.shape[0]

    @property
    def mode_count(self) -> int:
        return self.projection.shape[1]


def _symmetric_orthonormalize(rows: np.ndarray) -> np.ndarray:
    # Loewdin: closest orthonormal set, no pixel is privileged.  A second
    # pass removes the round-off left by an ill-conditioned overlap.
    for _ in range(2):
        overlap = rows @ rows.T
        vals, vecs = np.linalg.eigh(overlap)
        if np.min(vals) < 1e-14:
            raise EmptyPixelError("pixel modes are linearly dependent within the retained supermodes")
        rows = ((vecs / np.sqrt(vals)) @ vecs.T) @ rows
    return rows


def _complete(rows: np.ndarray) -> np.ndarray:
    N, K = rows.shape
    q, _ = np.linalg.qr(rows.T, mode="complete")
    rest = q[:, N:]
    # one re-orthogonalisation pass against the pixel rows
    rest = rest - rows.T @ (rows @ rest)
    rest, _ = np.linalg.qr(rest)
    idx = np.argmax(np.abs(rest), axis=0)
    signs = np.sign(rest[idx, np.arange(rest.shape[1])])
    signs[signs == 0] = 1.0
    return np.vstack([rows, (rest * signs).T])


def build_pixel_map(basis: SupermodeBasis, partition: PixelPartition) -> PixelMap:
    if partition.teeth_count != basis.teeth_count:
        raise DimensionError(
            f"partition has {partition.teeth_count} teeth, supermodes are sampled on {basis.teeth_count}"
        )
    K = basis.mode_count
    N = partition.party_count
    if N > K:
        raise RangeError(f"cannot form {N} pixel modes from {K} supermodes")
    weighted = lo_profile(partition)[:, None] * basis.eigenvectors
    b = partition.boundaries
    raw = np.array([weighted[b[i] : b[i + 1]].sum(axis=0) for i in range(N)])
    norms = np.linalg.norm(raw, axis=1)
    if np.any(norms < 1e-10):
        bad = [i for i in range(N) if norms[i] < 1e-10]
        raise EmptyPixelError(f"pixel(s) {bad} have no LO overlap with the retained supermodes")
    projection = raw / norms[:, None]
    rows = _symmetric_orthonormalize(projection) if N > 1 else projection
    completion = _complete(rows)
    for arr in (projection, completion):
        arr.flags.writeable = False
    return PixelMap(projection=projection, completion=completion)


def identity_map(K: int, N: int) -> PixelMap:
    eye = np.eye(K)
    return PixelMap(projection=eye[:N].copy(), completion=eye)


def to_pixels(
    state: GaussianMixture, pmap: PixelMap, eta_det: float = 1.0, loss_convention: str = "intensity"
) -> GaussianMixture:
    """Supermode state -> pixel-mode state with detection loss applied."""
    K = pmap.mode_count
    if state.n_modes != K:
        raise DimensionError(f"state has {state.n_modes} modes, pixel map expects {K}")
    if not 0.0 < eta_det <= 1.0:
        raise RangeError(f"detection efficiency {eta_det} outside (0, 1]")
    N = pmap.party_count
    # same orthogonal mixing on q and p: O (x) I_2 in interleaved order
    sym = ModeLinearMap(np.kron(pmap.completion, np.eye(2)))
    mixed = apply_map(state, sym, range(K))
    reduced = marginalize_modes(mixed, range(N)) if N < K else mixed
    if eta_det < 1.0:
        reduced = apply_loss(reduced, eta_det, range(N), loss_convention)
    return reduced

