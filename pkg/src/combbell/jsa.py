"""Joint spectral coupling of a synchronously pumped OPO and its supermodes.

The comb is discretised on ``teeth_count`` teeth labelled ``0..M-1``.  The
coupling between teeth ``m`` and ``q`` is the product of a pump amplitude that
depends only on ``m + q`` and a crystal phase-matching factor ``sinc(phi_mq)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DegenerateSourceError, RangeError

__all__ = [
    "CombConfig",
    "JsaMatrix",
    "SupermodeBasis",
    "build_jsa",
    "decompose",
    "squeezing_fraction",
    "phase_mismatch",
]


@dataclass(frozen=True)
class CombConfig:
    """Source parameters for the desk-scale comb model.

    ``pump_width`` is the standard deviation of the pump amplitude measured on
    the tooth-sum axis ``m + q``.  ``center_index`` is the degenerate tooth and
    may sit between two teeth; ``None`` means the middle of the grid.
    The default mismatch model is
    ``phi = L * (zeta1 * (m + q - 2 m0) + zeta2 * (m - q)**2)``;
    a tabulated ``M x M`` array in ``phase_table`` overrides it.
    """

    teeth_count: int = 256
    center_index: Optional[float] = None
    pump_center: Optional[float] = None
    pump_width: float = 3.8
    zeta1: float = 0.0
    zeta2: float = 1.0e-4
    crystal_length_scale: float = 1.0
    s1_target: float = 1.0
    truncation: int = 50
    phase_table: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if int(self.teeth_count) != self.teeth_count or self.teeth_count < 2:
            raise RangeError(f"teeth_count must be an integer >= 2, got {self.teeth_count}")
        if not self.pump_width > 0:
            raise RangeError(f"pump_width must be positive, got {self.pump_width}")
        if not 1 <= self.truncation <= self.teeth_count:
            raise RangeError(
                f"truncation K={self.truncation} must lie in [1, teeth_count={self.teeth_count}]"
            )
        if not self.s1_target >= 0:
            raise RangeError(f"s1_target must be >= 0, got {self.s1_target}")
        for name in ("zeta1", "zeta2", "crystal_length_scale"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")
        if self.phase_table is not None:
            table = np.asarray(self.phase_table, dtype=float)
            if table.shape != (self.teeth_count, self.teeth_count):
                raise ConfigurationError(
                    f"phase_table must be {self.teeth_count}x{self.teeth_count}, got {table.shape}"
                )

    @property
    def center(self) -> float:
        if self.center_index is None:
            return (self.teeth_count - 1) / 2.0
        return float(self.center_index)

    @property
    def pump_center_index(self) -> float:
        return self.center if self.pump_center is None else float(self.pump_center)


@dataclass(frozen=True)
class JsaMatrix:
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ConfigurationError(f"coupling matrix must be square, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("coupling matrix has non-finite entries")
        if not np.array_equal(values, values.T):
            raise ConfigurationError("coupling matrix is not symmetric")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SupermodeBasis:
    """Leading eigenpairs of the coupling matrix.

    ``eigenvectors`` has one column per retained supermode, sampled on the
    tooth grid.  ``spectrum`` keeps every eigenvalue (sorted like
    ``eigenvalues``) so truncation fractions can be computed later.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    squeezings: np.ndarray
    spectrum: np.ndarray

    @property
    def mode_count(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def teeth_count(self) -> int:
        return self.eigenvectors.shape[0]


def phase_mismatch(config: CombConfig) -> np.ndarray:
    """Phase mismatch ``phi_mq`` on the tooth grid."""
    if config.phase_table is not None:
        table = np.asarray(config.phase_table, dtype=float)
        return 0.5 * (table + table.T)
    m = np.arange(config.teeth_count, dtype=float)
    tooth_sum = m[:, None] + m[None, :]
    tooth_diff = m[:, None] - m[None, :]
    phi = config.zeta1 * (tooth_sum - 2.0 * config.center) + config.zeta2 * tooth_diff**2
    return config.crystal_length_scale * phi


def build_jsa(config: CombConfig) -> JsaMatrix:
    m = np.arange(config.teeth_count, dtype=float)
    tooth_sum = m[:, None] + m[None, :]
    with np.errstate(over="ignore", invalid="ignore"):
        envelope = np.exp(
            -((tooth_sum - 2.0 * config.pump_center_index) ** 2) / (2.0 * config.pump_width**2)
        )
        # np.sinc is sin(pi x)/(pi x); sinc(0) = 1 is handled there
        values = np.sinc(phase_mismatch(config) / np.pi) * envelope
    if not np.all(np.isfinite(values)):
        raise ConfigurationError("coupling matrix overflowed; check pump and mismatch parameters")
    values = 0.5 * (values + values.T)
    return JsaMatrix(values)


def _normalise_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude component positive; first index wins ties
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _order(eigenvalues: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    scale = np.max(np.abs(eigenvalues))
    if scale == 0:
        return np.arange(eigenvalues.size)
    # quantise so that round-off does not split genuine ties
    magnitude = np.round(np.abs(eigenvalues) / scale, 12)
    # lexsort uses the last key as primary: magnitude desc, then vector desc
    keys = tuple(-vectors[::-1, :]) + (-magnitude,)
    return np.lexsort(keys)


def decompose(jsa: JsaMatrix, K: int, s1_target: float) -> SupermodeBasis:
    """Top-``K`` supermodes by eigenvalue magnitude.

    Squeezing parameters keep the eigenvalue sign and are scaled so the
    leading supermode has ``s1_target``.
    """
    M = jsa.size
    if int(K) != K or not 1 <= K <= M:
        raise RangeError(f"K={K} must lie in [1, {M}]")
    eigenvalues, vectors = np.linalg.eigh(jsa.values)
    vectors = _normalise_signs(vectors)
    order = _order(eigenvalues, vectors)
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]
    if eigenvalues[0] == 0:
        raise DegenerateSourceError("leading eigenvalue of the coupling matrix is zero")
    squeezings = s1_target * eigenvalues[:K] / eigenvalues[0]
    spectrum = eigenvalues.copy()
    top = eigenvalues[:K].copy()
    modes = np.ascontiguousarray(vectors[:, :K])
    for arr in (top, modes, squeezings, spectrum):
        arr.flags.writeable = False
    return SupermodeBasis(eigenvalues=top, eigenvectors=modes, squeezings=squeezings, spectrum=spectrum)


def squeezing_fraction(basis: SupermodeBasis, K: int, measure: str = "abs") -> float:
    """Share of the total squeezing carried by the first ``K`` supermodes.

    ``measure="abs"`` sums ``|lambda|`` (equivalently squeezing in dB);
    ``measure="squared"`` sums ``lambda**2``.
    """
    spectrum = np.abs(basis.spectrum)
    if measure == "squared":
        spectrum = spectrum**2
    elif measure != "abs":
        raise ConfigurationError(f"unknown squeezing measure {measure!r}")
    if not 0 <= K <= spectrum.size:
        raise RangeError(f"K={K} must lie in [0, {spectrum.size}]")
    # running sum: monotone in K to the last bit
    running = np.concatenate([[0.0], np.cumsum(spectrum)])
    total = running[-1]
    if total == 0:
        raise DegenerateSourceError("coupling matrix has an empty spectrum")
    return float(running[K] / total)
