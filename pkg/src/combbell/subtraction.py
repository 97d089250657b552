"""Heralded photon subtraction with weak beam-splitter taps and on-off detectors.

Ancilla modes are appended after the system modes: for a system of ``n``
modes, ancilla ``k`` has index ``n + k``.  The block-ordered layout with
ancillas first (``A1, A2, system...``) is available through
:func:`ancillas_first_permutation` for comparisons.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, RangeError
from .gaussian import (
    GaussianMixture,
    apply_loss,
    apply_map,
    beam_splitter,
    marginalize_modes,
    multiply_onoff_povm,
    normalize,
    quadrature_indices,
)

__all__ = [
    "TapSpec",
    "herald",
    "subtract_two_same_mode",
    "subtract_one_per_mode",
    "ancillas_first_permutation",
]

WEAK_TAP_WARNING = 0.8


@dataclass(frozen=True)
class TapSpec:
    target_mode: int = 0
    transmissivity: float = 0.99
    tap_efficiency: float = 1.0

    def __post_init__(self):
        if int(self.target_mode) != self.target_mode or self.target_mode < 0:
            raise RangeError(f"target_mode must be a non-negative integer, got {self.target_mode}")
        if not 0.0 < self.transmissivity <= 1.0:
            raise RangeError(f"tap transmissivity {self.transmissivity} outside (0, 1]")
        if not 0.0 < self.tap_efficiency <= 1.0:
            raise RangeError(f"tap efficiency {self.tap_efficiency} outside (0, 1]")
        if self.transmissivity < WEAK_TAP_WARNING:
            warnings.warn(
                f"tap transmissivity {self.transmissivity} is far from the weak-tap regime",
                stacklevel=2,
            )


def _embed(state: GaussianMixture, n_ancillas: int) -> GaussianMixture:
    n = state.n_modes
    d = 2 * (n + n_ancillas)
    covs = np.broadcast_to(np.eye(d), (len(state), d, d)).copy()
    covs[:, : 2 * n, : 2 * n] = state.covariances
    return GaussianMixture(state.weights, covs, check=False)


def herald(state: GaussianMixture, n_ancillas: int, steps: Sequence[tuple]) -> tuple[GaussianMixture, float]:
    """Generic herald engine.

    Appends ``n_ancillas`` vacuum modes, runs ``steps`` on the extended state,
    requires a click on every ancilla and integrates the ancillas out.
    Steps are ``("bs", mode_a, mode_b, T)`` or ``("loss", modes, eta)``.
    Returns the normalised conditional state and the heralding probability.
    """
    n = state.n_modes
    ext = _embed(state, n_ancillas)
    for step in steps:
        kind = step[0]
        if kind == "bs":
            _, a, b, T = step
            ext = apply_map(ext, beam_splitter(T), [a, b])
        elif kind == "loss":
            _, modes, eta = step
            ext = apply_loss(ext, eta, modes)
        else:
            raise ValueError(f"unknown herald step {kind!r}")
    for k in range(n_ancillas):
        ext = multiply_onoff_povm(ext, n + k)
    reduced = marginalize_modes(ext, range(n))
    return normalize(reduced)


def _check_target(state: GaussianMixture, tap: TapSpec) -> None:
    if tap.target_mode >= state.n_modes:
        raise DimensionError(f"target mode {tap.target_mode} out of range for {state.n_modes} modes")


def subtract_two_same_mode(state: GaussianMixture, tap: TapSpec = TapSpec()) -> tuple[GaussianMixture, float]:
    """Two-photon subtraction from one mode: weak tap, 50:50 split, coincidence."""
    _check_target(state, tap)
    n = state.n_modes
    a1, a2 = n, n + 1
    steps = [
        ("bs", tap.target_mode, a1, tap.transmissivity),
        ("loss", [a1], tap.tap_efficiency),
        ("bs", a1, a2, 0.5),
    ]
    return herald(state, 2, steps)


def subtract_one_per_mode(state: GaussianMixture, taps: Sequence[TapSpec]) -> tuple[GaussianMixture, float]:
    """One heralded subtraction on each listed target, all clicks in coincidence."""
    taps = list(taps)
    if not taps:
        return state, 1.0
    targets = [t.target_mode for t in taps]
    if len(set(targets)) != len(targets):
        raise DimensionError(f"tap targets must be distinct, got {targets}")
    for tap in taps:
        _check_target(state, tap)
    n = state.n_modes
    steps: list[tuple] = []
    for k, tap in enumerate(taps):
        steps.append(("bs", tap.target_mode, n + k, tap.transmissivity))
        steps.append(("loss", [n + k], tap.tap_efficiency))
    return herald(state, len(taps), steps)


def ancillas_first_permutation(n_system: int, n_ancillas: int) -> np.ndarray:
    """Variable permutation from ``(system..., ancillas...)`` to ``(ancillas..., system...)``."""
    modes = list(range(n_system, n_system + n_ancillas)) + list(range(n_system))
    return np.array(quadrature_indices(modes))
