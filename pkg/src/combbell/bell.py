"""Sign-binned homodyne correlators and Bell combinations.

Each party rotates its mode by its setting angle (plus a global offset) and
records ``sign(q)``.  For a signed Gaussian mixture the correlator is the
weighted sum of per-term sign correlators of the q-marginals.

Setting tuples are 0-based in code (``(0, 1, 0, 0)`` is a1 b2 c1 d1); the
serialised tables use the 1-based digit strings ``"1211"``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import ConfigurationError, DimensionError
from .gaussian import GaussianMixture
from .orthant import DEFAULT_ABSTOL, sign_correlators

__all__ = [
    "KINDS",
    "PARTY_COUNT",
    "INEQUALITY_TERMS",
    "MeasurementSettings",
    "QMixture",
    "BellOutcome",
    "CorrelatorModel",
    "GaussianCorrelatorModel",
    "FunctionCorrelatorModel",
    "q_marginal",
    "correlator",
    "correlator_long_form",
    "bell_value",
    "combine",
    "evaluate_inequality",
    "chsh",
    "mk4",
    "mermin4",
]

KINDS = ("chsh", "mk4", "mermin4")
PARTY_COUNT = {"chsh": 2, "mk4": 4, "mermin4": 4}
ALGEBRAIC_MAX = {"chsh": 2.0, "mk4": 4.0, "mermin4": 2.0}


def _terms(plus: Sequence[str], minus: Sequence[str]) -> tuple[tuple[float, tuple[int, ...]], ...]:
    def idx(code: str) -> tuple[int, ...]:
        return tuple(int(ch) - 1 for ch in code)

    return tuple([(1.0, idx(c)) for c in plus] + [(-1.0, idx(c)) for c in minus])


# (prefactor, ((sign, setting tuple), ...)); digits are a b [c d], 1 = first setting
INEQUALITY_TERMS = {
    "chsh": (0.5, _terms(["11", "21", "12"], ["22"])),
    "mk4": (
        0.25,
        _terms(
            ["1111", "2111", "1211", "1121", "1112", "2222"],
            ["2211", "2121", "1221", "2221", "2112", "1212", "2212", "1122", "2122", "1222"],
        ),
    ),
    "mermin4": (
        0.25,
        _terms(["2111", "1211", "1121", "1112"], ["2221", "2212", "2122", "1222"]),
    ),
}


def setting_code(index: Sequence[int]) -> str:
    return "".join(str(i + 1) for i in index)


@dataclass(frozen=True)
class MeasurementSettings:
    """Two setting angles per party plus one global offset per party (first fixed at 0)."""

    angles: np.ndarray
    offsets: Optional[np.ndarray] = None

    def __post_init__(self):
        angles = np.array(self.angles, dtype=float)
        if angles.ndim != 2 or angles.shape[1] != 2:
            raise DimensionError(f"angles must be an N x 2 array, got shape {angles.shape}")
        if not np.all(np.isfinite(angles)):
            raise ConfigurationError("setting angles must be finite")
        offsets = np.zeros(angles.shape[0]) if self.offsets is None else np.array(self.offsets, dtype=float)
        if offsets.shape != (angles.shape[0],):
            raise DimensionError(f"need {angles.shape[0]} offsets, got shape {offsets.shape}")
        if offsets[0] != 0.0:
            raise ConfigurationError("the first party's global offset is fixed at 0")
        if not np.all(np.isfinite(offsets)):
            raise ConfigurationError("offsets must be finite")
        angles.flags.writeable = False
        offsets.flags.writeable = False
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "offsets", offsets)

    @property
    def party_count(self) -> int:
        return self.angles.shape[0]

    def thetas(self, index: Sequence[int]) -> np.ndarray:
        """Rotation angle per party for the setting tuple ``index``."""
        return self.angles[np.arange(self.party_count), list(index)] + self.offsets

    def effective(self) -> np.ndarray:
        return self.angles + self.offsets[:, None]

    def to_dict(self) -> dict:
        return {"angles": self.angles.tolist(), "offsets": self.offsets.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "MeasurementSettings":
        return cls(np.asarray(data["angles"], dtype=float), data.get("offsets"))


@dataclass(frozen=True)
class QMixture:
    """Signed mixture of zero-mean Gaussians over the rotated q quadratures."""

    weights: np.ndarray
    q_covariances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        c = np.asarray(self.q_covariances, dtype=float)
        if c.ndim != 3 or c.shape[0] != w.size or c.shape[1] != c.shape[2]:
            raise DimensionError(f"weights {w.shape} and covariances {c.shape} do not match")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "q_covariances", c)

    @property
    def party_count(self) -> int:
        return self.q_covariances.shape[1]


@dataclass(frozen=True)
class BellOutcome:
    """``value`` is the normalised Bell quantity, ``|.|`` of the signed sum
    (classical bound 1).  ``correlators`` maps 1-based setting codes to E."""

    kind: str
    value: float
    settings: MeasurementSettings
    correlators: dict = field(default_factory=dict)
    signed_value: float = 0.0

    @property
    def violation(self) -> bool:
        return self.value > 1.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "signed_value": self.signed_value,
            "violation": self.violation,
            "settings": self.settings.to_dict(),
            "correlators": dict(self.correlators),
        }


def _direction(thetas: np.ndarray) -> np.ndarray:
    # rotated q' = cos(theta) q + sin(theta) p
    return np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)


def _q_covariances(covs: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """``covs`` (T, 2N, 2N), ``thetas`` (B, N) -> (B, T, N, N)."""
    T, d, _ = covs.shape
    N = d // 2
    blocks = covs.reshape(T, N, 2, N, 2)
    u = _direction(np.atleast_2d(thetas))
    return np.einsum("bia,tiajc,bjc->btij", u, blocks, u, optimize=True)


def q_marginal(state: GaussianMixture, thetas: Sequence[float]) -> QMixture:
    """Rotate mode ``i`` by ``thetas[i]`` and integrate out every p quadrature."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.shape != (state.n_modes,):
        raise DimensionError(f"need {state.n_modes} angles, got shape {thetas.shape}")
    q = _q_covariances(state.covariances, thetas[None])[0]
    return QMixture(state.weights.copy(), q)


def correlator(qmix: QMixture, abstol: float = DEFAULT_ABSTOL) -> float:
    """``E[prod_i sign(q_i)]`` of a signed q-mixture, summed in term order."""
    scale = max(float(np.sum(np.abs(qmix.weights))), 1.0)
    per_term = sign_correlators(qmix.q_covariances, max(abstol / scale, 1e-13))
    total = 0.0
    for w, e in zip(qmix.weights, per_term):
        total += w * e
    return float(total)


def _quadrant_probability(cov: np.ndarray) -> float:
    # polar form of the Gaussian integral over q1 > 0, q2 > 0
    inv = np.linalg.inv(cov)
    norm = 2.0 * np.pi * np.sqrt(np.linalg.det(cov))

    def radial(phi):
        c, s = np.cos(phi), np.sin(phi)
        a = inv[0, 0] * c * c + 2.0 * inv[0, 1] * c * s + inv[1, 1] * s * s
        return 1.0 / a

    value, _ = quad(radial, 0.0, np.pi / 2.0, epsabs=1e-14, epsrel=1e-13)
    return value / norm


def correlator_long_form(qmix: QMixture) -> float:
    """Two-party correlator from the probability of equal signs.

    ``P_+1 = 2 P(q1 > 0, q2 > 0)`` by central symmetry, ``P_-1 = 1 - P_+1``
    and ``E = P_+1 - P_-1``.  The quadrant integral is done numerically, so
    this route shares no formula with :func:`correlator`.
    """
    if qmix.party_count != 2:
        raise DimensionError("the long-form correlator is defined for two parties")
    p_plus = 0.0
    for w, cov in zip(qmix.weights, qmix.q_covariances):
        p_plus += w * 2.0 * _quadrant_probability(cov)
    return 2.0 * p_plus - 1.0


class CorrelatorModel:
    """Anything that maps rotation-angle tuples (B, N) to correlators (B,)."""

    party_count: int

    def correlators(self, thetas: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


class GaussianCorrelatorModel(CorrelatorModel):
    """Correlators of a signed Gaussian mixture, memoised on quantised q-covariances.

    Neighbouring setting tuples in a search share most of their rotated
    covariances, so the cache keys on the q-covariance itself (rounded to
    ``quantum``) rather than on the angles.
    """

    def __init__(self, state: GaussianMixture, abstol: float = DEFAULT_ABSTOL, quantum: float = 1e-9,
                 cache: bool = True, max_cache: int = 2_000_000):
        if not state.normalized:
            raise ConfigurationError("correlators need a normalised state")
        self.state = state
        self.party_count = state.n_modes
        self.abstol = abstol
        # heralded weights are large and cancel; scale the per-term target so
        # the mixture correlator meets ``abstol``
        self.term_abstol = max(abstol / float(np.sum(np.abs(state.weights))), 1e-13)
        self.quantum = quantum
        self.use_cache = cache
        self.max_cache = max_cache
        self._cache: dict[bytes, float] = {}
        self.hits = 0
        self.misses = 0

    def term_correlators(self, thetas: np.ndarray) -> np.ndarray:
        """Per-term sign correlators, shape (B, T)."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        q = _q_covariances(self.state.covariances, thetas)
        B, T, N, _ = q.shape
        flat = q.reshape(B * T, N, N)
        if not self.use_cache:
            return sign_correlators(flat, self.term_abstol).reshape(B, T)
        keys = np.rint(flat / self.quantum).astype(np.int64)
        out = np.empty(B * T)
        todo = []
        for k in range(B * T):
            key = keys[k].tobytes()
            hit = self._cache.get(key)
            if hit is None:
                todo.append(k)
            else:
                out[k] = hit
        self.hits += B * T - len(todo)
        self.misses += len(todo)
        if todo:
            fresh = sign_correlators(flat[todo], self.term_abstol)
            out[todo] = fresh
            if len(self._cache) + len(todo) > self.max_cache:
                self._cache.clear()
            for k, v in zip(todo, fresh):
                self._cache[keys[k].tobytes()] = float(v)
        return out.reshape(B, T)

    def correlators(self, thetas: np.ndarray) -> np.ndarray:
        per_term = self.term_correlators(thetas)
        total = np.zeros(per_term.shape[0])
        # fixed summation order over terms
        for t, w in enumerate(self.state.weights):
            total += w * per_term[:, t]
        return total


class FunctionCorrelatorModel(CorrelatorModel):
    """Wraps a closed-form correlator ``f(thetas (B, N)) -> (B,)``; used for toys and tests."""

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], party_count: int):
        self.func = func
        self.party_count = party_count

    def correlators(self, thetas: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(np.atleast_2d(np.asarray(thetas, dtype=float))), dtype=float)


def as_model(source, abstol: float = DEFAULT_ABSTOL) -> CorrelatorModel:
    if isinstance(source, CorrelatorModel):
        return source
    if isinstance(source, GaussianMixture):
        return GaussianCorrelatorModel(source, abstol)
    raise TypeError(f"cannot compute correlators from {type(source).__name__}")


def _check_kind(kind: str, party_count: int) -> None:
    if kind not in KINDS:
        raise ConfigurationError(f"unknown inequality {kind!r}; choose from {KINDS}")
    if PARTY_COUNT[kind] != party_count:
        raise DimensionError(f"{kind} needs {PARTY_COUNT[kind]} parties, state has {party_count}")


def combine(kind: str, table: Mapping[tuple[int, ...], float]) -> float:
    """Signed Bell sum (before the absolute value) from a correlator table."""
    prefactor, terms = INEQUALITY_TERMS[kind]
    total = 0.0
    for sign, idx in terms:
        total += sign * table[idx]
    return prefactor * total


def bell_value(kind: str, table: Mapping[tuple[int, ...], float]) -> float:
    return abs(combine(kind, table))


def evaluate_inequality(source, kind: str, settings: MeasurementSettings,
                        abstol: float = DEFAULT_ABSTOL) -> BellOutcome:
    model = as_model(source, abstol)
    _check_kind(kind, model.party_count)
    if settings.party_count != model.party_count:
        raise DimensionError(f"settings for {settings.party_count} parties, state has {model.party_count}")
    _, terms = INEQUALITY_TERMS[kind]
    indices = [idx for _, idx in terms]
    thetas = np.array([settings.thetas(idx) for idx in indices])
    values = model.correlators(thetas)
    table = {idx: float(v) for idx, v in zip(indices, values)}
    signed = combine(kind, table)
    return BellOutcome(
        kind=kind,
        value=abs(signed),
        settings=settings,
        correlators={setting_code(idx): table[idx] for idx in indices},
        signed_value=signed,
    )


def chsh(state, settings: MeasurementSettings, abstol: float = DEFAULT_ABSTOL) -> BellOutcome:
    return evaluate_inequality(state, "chsh", settings, abstol)


def mk4(state, settings: MeasurementSettings, abstol: float = DEFAULT_ABSTOL) -> BellOutcome:
    return evaluate_inequality(state, "mk4", settings, abstol)


def mermin4(state, settings: MeasurementSettings, abstol: float = DEFAULT_ABSTOL) -> BellOutcome:
    return evaluate_inequality(state, "mermin4", settings, abstol)


def all_settings(party_count: int) -> list[tuple[int, ...]]:
    return list(itertools.product((0, 1), repeat=party_count))
