"""Angle optimisation and parameter sweeps.

The grid search evaluates every correlator once on the product grid of
per-party rotation angles, then scans all choices of two settings per party
against that table.  Local polishing is a compass search with step halving.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .bell import (
    INEQUALITY_TERMS,
    PARTY_COUNT,
    BellOutcome,
    MeasurementSettings,
    as_model,
    evaluate_inequality,
)
from .errors import CombBellError, ConfigurationError, DimensionError, RangeError
from .orthant import DEFAULT_ABSTOL

__all__ = [
    "AngleGrid",
    "grid_search",
    "grid_candidates",
    "refine",
    "optimize",
    "SweepSpec",
    "sweep",
    "sweep_rows",
    "SWEEP_COLUMNS",
]

WORKERS_ENV = "COMBBELL_WORKERS"


@dataclass(frozen=True)
class AngleGrid:
    """Uniform angles ``k pi / steps`` on ``[0, pi)``.

    A shift by ``pi`` only flips correlator signs, so the half-circle is
    enough.  With ``include_offsets`` every party after the first also tries
    global rotations ``j * step / offset_steps`` that shift both its
    settings off the grid.
    """

    steps_per_angle: int = 24
    include_offsets: bool = False
    offset_steps: int = 2

    def __post_init__(self):
        if int(self.steps_per_angle) != self.steps_per_angle or self.steps_per_angle < 4:
            raise RangeError(f"steps_per_angle must be an integer >= 4, got {self.steps_per_angle}")
        if self.offset_steps < 1:
            raise RangeError(f"offset_steps must be >= 1, got {self.offset_steps}")

    @property
    def step(self) -> float:
        return math.pi / self.steps_per_angle

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.steps_per_angle) * self.step

    def offset_choices(self, party_count: int) -> list[tuple[float, ...]]:
        if not self.include_offsets:
            return [(0.0,) * party_count]
        shifts = [j * self.step / self.offset_steps for j in range(self.offset_steps)]
        return [(0.0,) + combo for combo in itertools.product(shifts, repeat=party_count - 1)]


def _check(kind: str, party_count: int) -> None:
    if kind not in INEQUALITY_TERMS:
        raise ConfigurationError(f"unknown inequality {kind!r}")
    if PARTY_COUNT[kind] != party_count:
        raise DimensionError(f"{kind} needs {PARTY_COUNT[kind]} parties, state has {party_count}")


def correlator_table(model, grid: AngleGrid, offsets: Sequence[float]) -> np.ndarray:
    """Correlators on the full product grid, shape ``(S,) * N``."""
    N = model.party_count
    S = grid.steps_per_angle
    axes = [grid.angles + offsets[p] for p in range(N)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, N)
    return model.correlators(mesh).reshape((S,) * N)


def _bell_sums(table: np.ndarray, kind: str, first: tuple[int, int]) -> np.ndarray:
    """Signed Bell sums with party 0 fixed to grid indices ``first``.

    Output axes are ``(b1, b2, c1, c2, ...)`` in lexicographic order.
    """
    N = table.ndim
    S = table.shape[0]
    prefactor, terms = INEQUALITY_TERMS[kind]
    out = np.zeros((S,) * (2 * (N - 1)))
    for sign, idx in terms:
        sub = table[first[idx[0]]]
        shape = []
        for x in idx[1:]:
            shape += [S, 1] if x == 0 else [1, S]
        out += sign * sub.reshape(shape)
    return prefactor * out


def _settings_from_flat(first: tuple[int, int], flat: int, N: int, grid: AngleGrid,
                        offsets: Sequence[float]) -> MeasurementSettings:
    S = grid.steps_per_angle
    rest = np.unravel_index(flat, (S,) * (2 * (N - 1))) if N > 1 else ()
    idx = np.array(list(first) + [int(r) for r in rest]).reshape(N, 2)
    return MeasurementSettings(grid.angles[idx], np.asarray(offsets, dtype=float))


def grid_candidates(source, kind: str, grid: AngleGrid = AngleGrid(), count: int = 1,
                    abstol: float = DEFAULT_ABSTOL) -> list[tuple[float, MeasurementSettings]]:
    """The ``count`` best grid points by ``|Bell sum|``, best first.

    Equal values are ordered by offset choice, then by the lexicographic
    order of the flattened angle indices ``(a1, a2, b1, b2, ...)``.
    """
    model = as_model(source, abstol)
    N = model.party_count
    _check(kind, N)
    S = grid.steps_per_angle
    pool: list[tuple[float, int, int, tuple[int, int], int]] = []  # (-value, offset#, order, first, flat)
    for o_index, offsets in enumerate(grid.offset_choices(N)):
        table = correlator_table(model, grid, offsets)
        for first in itertools.product(range(S), repeat=2):
            values = np.abs(_bell_sums(table, kind, first)).ravel()
            k = min(count, values.size)
            if k < values.size:
                top = np.argpartition(-values, k - 1)[:k]
            else:
                top = np.arange(values.size)
            order = first[0] * S + first[1]
            for flat in top:
                pool.append((-float(values[flat]), o_index, order, first, int(flat)))
            if len(pool) > 4 * count + 64:
                pool.sort(key=lambda r: (r[0], r[1], r[2], r[4]))
                del pool[count:]
    pool.sort(key=lambda r: (r[0], r[1], r[2], r[4]))
    choices = grid.offset_choices(N)
    return [
        (-neg, _settings_from_flat(first, flat, N, grid, choices[o_index]))
        for neg, o_index, _, first, flat in pool[:count]
    ]


def grid_search(source, kind: str, grid: AngleGrid = AngleGrid(),
                abstol: float = DEFAULT_ABSTOL) -> BellOutcome:
    """Exact maximum of ``|Bell value|`` over the angle grid."""
    model = as_model(source, abstol)
    _, settings = grid_candidates(model, kind, grid, 1, abstol)[0]
    return evaluate_inequality(model, kind, settings, abstol)


def _bell_batch(model, kind: str, angles: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """``|Bell sum|`` for a batch of angle arrays (B, N, 2) sharing ``offsets``."""
    prefactor, terms = INEQUALITY_TERMS[kind]
    B, N, _ = angles.shape
    parties = np.arange(N)
    thetas = np.stack([angles[:, parties, list(idx)] + offsets for _, idx in terms], axis=1)
    values = model.correlators(thetas.reshape(-1, N)).reshape(B, len(terms))
    total = np.zeros(B)
    for t, (sign, _) in enumerate(terms):
        total += sign * values[:, t]
    return np.abs(prefactor * total)


def refine(source, kind: str, start: MeasurementSettings, step: Optional[float] = None,
           xtol: float = 1e-4, ftol: float = 1e-9, max_iterations: int = 10_000,
           abstol: float = DEFAULT_ABSTOL) -> BellOutcome:
    """Compass search on the setting angles (offsets held fixed).

    Each iteration evaluates all ``+-step`` moves of every angle and takes
    the best strict improvement; without one the step is halved.  Stops when
    the step falls below ``xtol`` or an accepted move gains less than
    ``ftol``.  The result is never worse than ``start``.
    """
    model = as_model(source, abstol)
    _check(kind, model.party_count)
    if start.party_count != model.party_count:
        raise DimensionError("start settings do not match the party count")
    step = AngleGrid().step if step is None else float(step)
    x = start.angles.copy()
    offsets = start.offsets
    f = float(_bell_batch(model, kind, x[None], offsets)[0])
    n = x.size
    moves = np.concatenate([np.eye(n), -np.eye(n)])
    for _ in range(max_iterations):
        if step < xtol:
            break
        trial = x.reshape(1, -1) + step * moves
        values = _bell_batch(model, kind, trial.reshape(-1, *x.shape), offsets)
        best = int(np.argmax(values))
        if values[best] > f:
            gain = values[best] - f
            x = trial[best].reshape(x.shape)
            f = float(values[best])
            if gain < ftol:
                break
        else:
            step *= 0.5
    settings = MeasurementSettings(x, offsets)
    return evaluate_inequality(model, kind, settings, abstol)


def optimize(source, kind: str, grid: Optional[AngleGrid] = None, refine_top: int = 1,
             xtol: float = 1e-4, ftol: float = 1e-9, abstol: float = DEFAULT_ABSTOL) -> BellOutcome:
    """Grid search followed by refinement of the ``refine_top`` best grid points."""
    model = as_model(source, abstol)
    grid = grid or AngleGrid(24 if model.party_count == 2 else 8)
    candidates = grid_candidates(model, kind, grid, max(refine_top, 1), abstol)
    best: Optional[BellOutcome] = None
    for _, settings in candidates:
        if refine_top > 0:
            out = refine(model, kind, settings, step=grid.step, xtol=xtol, ftol=ftol, abstol=abstol)
        else:
            out = evaluate_inequality(model, kind, settings, abstol)
        if best is None or out.value > best.value:
            best = out
    return best


# ---------------------------------------------------------------- sweeps

SWEEP_COLUMNS = ["s1", "T", "eta_sub", "eta_det", "lo_width", "inequality", "best_value",
                 "angles", "herald_prob", "ms", "boundaries", "error"]
SWEEP_FIELDS = ("s1", "T", "eta_sub", "eta_det", "lo_width", "boundaries")


@dataclass(frozen=True)
class SweepSpec:
    """Grid of source and detector parameters run through the full pipeline.

    ``base`` is a scenario (see :mod:`combbell.scenario`); each tuple
    overrides the listed fields.  Tuples are ordered by
    ``itertools.product`` over ``SWEEP_FIELDS``.
    """

    base: Any
    s1: tuple[float, ...] = ()
    T: tuple[float, ...] = ()
    eta_sub: tuple[float, ...] = ()
    eta_det: tuple[float, ...] = ()
    lo_width: tuple[float, ...] = ()
    boundaries: tuple[tuple[int, ...], ...] = ()
    workers: Optional[int] = None
    timing: bool = True

    def __post_init__(self):
        for name in SWEEP_FIELDS:
            values = tuple(getattr(self, name))
            if name == "boundaries":
                values = tuple(tuple(int(b) for b in v) for v in values)
            else:
                values = tuple(float(v) for v in values)
            object.__setattr__(self, name, values)
        for name in ("s1", "lo_width"):
            if any(not v >= 0 for v in getattr(self, name)):
                raise RangeError(f"sweep {name} values must be non-negative")
        for name in ("T", "eta_sub", "eta_det"):
            if any(not 0.0 < v <= 1.0 for v in getattr(self, name)):
                raise RangeError(f"sweep {name} values must lie in (0, 1]")
        if self.workers is not None and self.workers < 1:
            raise RangeError(f"workers must be >= 1, got {self.workers}")

    def axes(self) -> list[tuple]:
        defaults = _base_values(self.base)
        return [getattr(self, name) or (defaults[name],) for name in SWEEP_FIELDS]

    def tuples(self) -> list[dict]:
        return [dict(zip(SWEEP_FIELDS, combo)) for combo in itertools.product(*self.axes())]


def _base_values(scenario) -> dict:
    return {
        "s1": scenario.source_squeezing,
        "T": scenario.subtraction.T,
        "eta_sub": scenario.subtraction.eta,
        "eta_det": scenario.detector_eta,
        "lo_width": scenario.lo_width,
        "boundaries": scenario.boundaries,
    }


def _fmt(x: float) -> str:
    return repr(float(x))


def _row_key(params: dict) -> tuple:
    return (_fmt(params["s1"]), _fmt(params["T"]), _fmt(params["eta_sub"]), _fmt(params["eta_det"]),
            _fmt(params["lo_width"]), _fmt_bounds(params["boundaries"]))


def _fmt_bounds(bounds) -> str:
    return "" if bounds is None else " ".join(str(int(b)) for b in bounds)


def run_tuple(args: tuple) -> dict:
    """Full pipeline for one parameter tuple; errors are captured in the row."""
    from .pipeline import run_pipeline  # pipeline builds on search

    base, params, timing = args
    row = {
        "s1": _fmt(params["s1"]),
        "T": _fmt(params["T"]),
        "eta_sub": _fmt(params["eta_sub"]),
        "eta_det": _fmt(params["eta_det"]),
        "lo_width": _fmt(params["lo_width"]),
        "inequality": base.inequality,
        "best_value": "",
        "angles": "",
        "herald_prob": "",
        "ms": "",
        "boundaries": _fmt_bounds(params["boundaries"]),
        "error": "",
    }
    start = time.perf_counter()
    try:
        scenario = base.with_overrides(**params)
        result = run_pipeline(scenario)
        row["best_value"] = _fmt(result.outcome.value)
        row["angles"] = json.dumps(result.outcome.settings.effective().tolist())
        row["herald_prob"] = _fmt(result.herald_probability)
    except CombBellError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    if timing:
        row["ms"] = str(int(round(1000 * (time.perf_counter() - start))))
    return row


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if value < 1:
            raise ConfigurationError(f"{WORKERS_ENV} must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def sweep_rows(spec: SweepSpec, done: Optional[dict] = None) -> list[dict]:
    """Rows in tuple order; tuples already present in ``done`` are reused."""
    done = done or {}
    tuples = spec.tuples()
    todo = [p for p in tuples if _row_key(p) not in done]
    workers = spec.workers or default_workers()
    jobs = [(spec.base, p, spec.timing) for p in todo]
    if workers == 1 or len(jobs) <= 1:
        fresh = [run_tuple(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            fresh = list(pool.map(run_tuple, jobs))
    computed = {_row_key(p): row for p, row in zip(todo, fresh)}
    rows = []
    for p in tuples:
        key = _row_key(p)
        rows.append(done[key] if key in done else computed[key])
    return rows


def rows_to_csv(rows: Iterable[dict], header_comment: str) -> str:
    buf = io.StringIO()
    buf.write(header_comment + "\n")
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def read_rows(path) -> dict:
    """Completed rows of an earlier sweep CSV, keyed by parameter tuple."""
    rows = {}
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    for row in csv.DictReader(lines):
        if set(row) != set(SWEEP_COLUMNS):
            raise ConfigurationError(f"{path} is not a sweep table (columns {sorted(row)})")
        key = (row["s1"], row["T"], row["eta_sub"], row["eta_det"], row["lo_width"], row["boundaries"])
        rows[key] = row
    return rows


def sweep(spec: SweepSpec, out_path=None, resume: bool = False, provenance: str = "") -> list[dict]:
    """Run the sweep; with ``out_path`` write the CSV (atomic rename).

    ``resume`` reuses rows already present in ``out_path``.
    """
    done = read_rows(out_path) if resume and out_path is not None and os.path.exists(out_path) else {}
    rows = sweep_rows(spec, done)
    if out_path is not None:
        text = rows_to_csv(rows, provenance or "# combbell sweep")
        tmp = f"{out_path}.tmp"
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, out_path)
    return rows


def best_row(rows: Sequence[dict]) -> Optional[dict]:
    scored = [r for r in rows if r["best_value"]]
    return max(scored, key=lambda r: float(r["best_value"])) if scored else None
