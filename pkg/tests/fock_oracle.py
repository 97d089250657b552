"""Truncated number-basis simulation used as an independent oracle.

States are real amplitude tensors with one axis per mode.  Beam splitters
act exactly inside each total-photon-number block, so the only
approximation is the initial truncation of the squeezed states.
Quadratures are ``q = (a + a^dag)/sqrt(2)``, so vacuum has
``W = exp(-q^2 - p^2)/pi``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import eval_genlaguerre, gammaln


def squeezed_amplitudes(s: float, cutoff: int) -> np.ndarray:
    """Squeezed vacuum with variance ``exp(2s)`` on q (``s > 0`` stretches q)."""
    psi = np.zeros(cutoff)
    t = math.tanh(s)
    for n in range(0, (cutoff + 1) // 2):
        k = 2 * n
        if k >= cutoff:
            break
        log_mag = 0.5 * gammaln(k + 1) - n * math.log(2.0) - gammaln(n + 1)
        psi[k] = (t**n) * math.exp(log_mag) / math.sqrt(math.cosh(s))
    return psi


@lru_cache(maxsize=None)
def _bs_block(N: int, T: float) -> np.ndarray:
    """``<k', N-k'| U |k, N-k>`` with ``U = exp(theta (a^dag b - a b^dag))``, ``cos(theta) = sqrt(T)``.

    In the Heisenberg picture ``a -> sqrt(T) a + sqrt(1-T) b``.
    """
    theta = math.acos(math.sqrt(T))
    k = np.arange(N)
    hop = np.sqrt((k + 1.0) * (N - k))  # a^dag b : |k, N-k> -> |k+1, N-k-1>
    G = np.zeros((N + 1, N + 1))
    G[k + 1, k] = hop
    G[k, k + 1] = -hop
    return expm(theta * G)


def beam_splitter(psi: np.ndarray, i: int, j: int, T: float) -> np.ndarray:
    """Apply the splitter to modes ``i`` (first) and ``j`` (second) of ``psi``."""
    moved = np.moveaxis(psi, (i, j), (-2, -1))
    D1, D2 = moved.shape[-2:]
    flat = moved.reshape(-1, D1, D2)
    out = np.zeros_like(flat)
    for N in range(D1 + D2 - 1):
        ks = [k for k in range(N + 1) if k < D1 and N - k < D2]
        if not ks:
            continue
        U = _bs_block(N, float(T))
        sub = U[np.ix_(ks, ks)]
        vec = np.stack([flat[:, k, N - k] for k in ks], axis=1)
        res = vec @ sub.T
        for col, k in enumerate(ks):
            out[:, k, N - k] = res[:, col]
    return np.moveaxis(out.reshape(moved.shape), (-2, -1), (i, j))


def vacuum_ancilla(psi: np.ndarray, cutoff: int) -> np.ndarray:
    e0 = np.zeros(cutoff)
    e0[0] = 1.0
    return np.multiply.outer(psi, e0)


def herald_clicks(psi: np.ndarray, ancillas) -> np.ndarray:
    """Project every ancilla axis on ``I - |0><0|``."""
    out = psi.copy()
    for a in ancillas:
        idx = [slice(None)] * out.ndim
        idx[a] = 0
        out[tuple(idx)] = 0.0
    return out


def reduced_density(psi: np.ndarray, keep) -> np.ndarray:
    keep = list(keep)
    rest = [a for a in range(psi.ndim) if a not in keep]
    moved = np.moveaxis(psi, keep + rest, list(range(psi.ndim)))
    dims = [psi.shape[k] for k in keep]
    flat = moved.reshape(int(np.prod(dims)), -1)
    return flat @ flat.T


def wigner_single(rho: np.ndarray, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Wigner function of a single-mode density matrix (real, symmetric)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    alpha = (q + 1j * p) / math.sqrt(2.0)
    x = 4.0 * np.abs(alpha) ** 2
    D = rho.shape[0]
    W = np.zeros(q.shape, dtype=complex)
    envelope = np.exp(-2.0 * np.abs(alpha) ** 2)
    for m in range(D):
        for n in range(m + 1):
            c = rho[m, n]
            if c == 0.0:
                continue
            k = m - n
            pref = (-1) ** n * math.exp(0.5 * (gammaln(n + 1) - gammaln(m + 1)))
            term = pref * (2.0 * np.conj(alpha)) ** k * eval_genlaguerre(n, k, x) * envelope
            if k == 0:
                W += c * term
            else:
                # |m><n| and |n><m| together give twice the real part
                W += 2.0 * c * term.real
    return W.real / math.pi


def two_photon_subtraction(s: float, T: float, cutoff: int):
    """Single squeezed mode, weak tap then 50:50 split, click on both ancillas.

    Returns ``(herald_probability, normalised system density matrix)``.
    """
    psi = squeezed_amplitudes(s, cutoff)
    psi = vacuum_ancilla(vacuum_ancilla(psi, cutoff), cutoff)  # axes: system, A1, A2
    psi = beam_splitter(psi, 0, 1, T)
    psi = beam_splitter(psi, 1, 2, 0.5)
    psi = herald_clicks(psi, [1, 2])
    rho = reduced_density(psi, [0])
    prob = float(np.trace(rho))
    return prob, rho / prob


def one_per_mode_tmsv(s: float, T: float, cutoff: int):
    """Two-mode squeezed vacuum, one tap and click per mode; returns the herald probability."""
    psi = np.multiply.outer(squeezed_amplitudes(s, cutoff), squeezed_amplitudes(-s, cutoff))
    psi = beam_splitter(psi, 0, 1, 0.5)
    psi = vacuum_ancilla(vacuum_ancilla(psi, cutoff), cutoff)  # S1, S2, A1, A2
    psi = beam_splitter(psi, 0, 2, T)
    psi = beam_splitter(psi, 1, 3, T)
    psi = herald_clicks(psi, [2, 3])
    return float(np.sum(psi**2))
