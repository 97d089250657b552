"""Scenario configuration: TOML schema, presets and validation.

A scenario file has an optional top-level ``preset`` and the sections below;
keys given in the file override the preset, everything else takes defaults.
Unknown sections or keys are rejected.

.. code-block:: toml

    preset = "paper-2party"

    [source]            # kind = "spopo" | "tmsv"; squeezing is used by tmsv
    kind = "spopo"
    squeezing = 0.66

    [comb]              # desk-scale frequency comb
    teeth = 256
    pump_width = 3.8
    zeta1 = 0.0
    zeta2 = 1e-4
    length_scale = 1.0
    s1 = 0.7
    K = 50
    # center, pump_center: optional tooth indices (default: grid middle)

    [subtraction]       # kind = "two-photon-same-mode" | "one-per-mode" | "none"
    kind = "two-photon-same-mode"
    target = 0          # integer, or list of integers for one-per-mode
    T = 0.99
    eta = 1.0

    [pixels]
    count = 2
    # boundaries = [0, 128, 256]

    [lo]
    width = 22.0
    # center = 127.5

    [detector]
    eta = 1.0
    loss_convention = "intensity"

    [bell]
    inequality = "chsh"  # chsh | mk4 | mermin4
    steps = 24
    offsets = false
    offset_steps = 2
    refine_top = 4
    abstol = 1e-7
    xtol = 1e-4
    ftol = 1e-9
    # angles = [[a1, a2], [b1, b2]]  evaluate fixed settings instead of searching
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bell import KINDS, PARTY_COUNT
from .errors import ConfigurationError, RangeError
from .gaussian import LOSS_CONVENTIONS, MAX_SQUEEZING
from .jsa import CombConfig

__all__ = ["Scenario", "PRESETS", "load_scenario", "parse_scenario", "scenario_from_dict", "SUBTRACTION_KINDS"]

SUBTRACTION_KINDS = ("two-photon-same-mode", "one-per-mode", "none")
SOURCE_KINDS = ("spopo", "tmsv")

_NUMBER = (int, float)
SCHEMA: dict[str, dict[str, tuple]] = {
    "source": {"kind": (str,), "squeezing": _NUMBER},
    "comb": {
        "teeth": (int,),
        "center": _NUMBER,
        "pump_center": _NUMBER,
        "pump_width": _NUMBER,
        "zeta1": _NUMBER,
        "zeta2": _NUMBER,
        "length_scale": _NUMBER,
        "s1": _NUMBER,
        "K": (int,),
    },
    "subtraction": {"kind": (str,), "target": (int, list), "T": _NUMBER, "eta": _NUMBER},
    "pixels": {"count": (int,), "boundaries": (list,)},
    "lo": {"center": _NUMBER, "width": _NUMBER},
    "detector": {"eta": _NUMBER, "loss_convention": (str,)},
    "bell": {
        "inequality": (str,),
        "steps": (int,),
        "offsets": (bool,),
        "offset_steps": (int,),
        "refine_top": (int,),
        "abstol": _NUMBER,
        "xtol": _NUMBER,
        "ftol": _NUMBER,
        "angles": (list,),
        "global_offsets": (list,),
    },
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "source": {"kind": "spopo", "squeezing": 0.66},
    "comb": {
        "teeth": 256,
        "center": None,
        "pump_center": None,
        "pump_width": 3.8,
        "zeta1": 0.0,
        "zeta2": 1e-4,
        "length_scale": 1.0,
        "s1": 0.7,
        "K": 50,
    },
    "subtraction": {"kind": "two-photon-same-mode", "target": 0, "T": 0.99, "eta": 1.0},
    "pixels": {"count": 2, "boundaries": None},
    "lo": {"center": None, "width": 22.0},
    "detector": {"eta": 1.0, "loss_convention": "intensity"},
    "bell": {
        "inequality": "chsh",
        "steps": 24,
        "offsets": False,
        "offset_steps": 2,
        "refine_top": 4,
        "abstol": 1e-7,
        "xtol": 1e-4,
        "ftol": 1e-9,
        "angles": None,
        "global_offsets": None,
    },
}

PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    "reference-tmsv": {
        "source": {"kind": "tmsv", "squeezing": 0.66},
        "subtraction": {"kind": "one-per-mode", "target": [0, 1], "T": 0.99, "eta": 1.0},
        "pixels": {"count": 2},
        "detector": {"eta": 1.0},
        "bell": {"inequality": "chsh", "steps": 24, "refine_top": 4},
    },
    "paper-2party": {
        "source": {"kind": "spopo"},
        "comb": {"s1": 0.7, "K": 50},
        "subtraction": {"kind": "two-photon-same-mode", "target": 0, "T": 0.99, "eta": 1.0},
        "pixels": {"count": 2},
        "lo": {"width": 22.0},
        "bell": {"inequality": "chsh", "steps": 24, "refine_top": 4},
    },
    "paper-4party": {
        "source": {"kind": "spopo"},
        "comb": {"s1": 0.7, "K": 50},
        "subtraction": {"kind": "two-photon-same-mode", "target": 0, "T": 0.99, "eta": 1.0},
        "pixels": {"count": 4},
        "lo": {"width": 22.0},
        "bell": {"inequality": "mk4", "steps": 8, "refine_top": 32},
    },
}


def _merge(base: dict, extra: Mapping) -> dict:
    out = copy.deepcopy(base)
    for section, values in extra.items():
        if isinstance(values, Mapping):
            out.setdefault(section, {}).update(copy.deepcopy(dict(values)))
        else:
            out[section] = values
    return out


@dataclass(frozen=True)
class SubtractionSpec:
    kind: str
    targets: tuple[int, ...]
    T: float
    eta: float


@dataclass(frozen=True)
class Scenario:
    """Validated scenario.  ``raw`` keeps the fully merged section dictionary."""

    raw: dict = field(repr=False, compare=False)
    preset: Optional[str]
    source: str
    comb: CombConfig
    tmsv_squeezing: float
    subtraction: SubtractionSpec
    party_count: int
    boundaries: Optional[tuple[int, ...]]
    lo_center: Optional[float]
    lo_width: float
    detector_eta: float
    loss_convention: str
    inequality: str

    @property
    def bell(self) -> dict:
        return self.raw["bell"]

    @property
    def source_squeezing(self) -> float:
        return self.tmsv_squeezing if self.source == "tmsv" else self.comb.s1_target

    @property
    def mode_count(self) -> int:
        return 2 if self.source == "tmsv" else self.comb.truncation

    def to_dict(self) -> dict:
        data = copy.deepcopy(self.raw)
        data["preset"] = self.preset
        return data

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def with_overrides(self, s1=None, T=None, eta_sub=None, eta_det=None, lo_width=None,
                       boundaries=None) -> "Scenario":
        extra: dict[str, dict] = {}
        if s1 is not None:
            if self.source == "tmsv":
                extra.setdefault("source", {})["squeezing"] = float(s1)
            else:
                extra.setdefault("comb", {})["s1"] = float(s1)
        if T is not None:
            extra.setdefault("subtraction", {})["T"] = float(T)
        if eta_sub is not None:
            extra.setdefault("subtraction", {})["eta"] = float(eta_sub)
        if eta_det is not None:
            extra.setdefault("detector", {})["eta"] = float(eta_det)
        if lo_width is not None:
            extra.setdefault("lo", {})["width"] = float(lo_width)
        if boundaries is not None:
            extra.setdefault("pixels", {})["boundaries"] = [int(b) for b in boundaries]
        return _build(_merge(self.raw, extra), self.preset)


def _check_schema(data: Mapping, sections: Mapping[str, dict]) -> None:
    for section, values in data.items():
        if section == "preset":
            continue
        if section not in sections:
            raise ConfigurationError(f"unknown section [{section}]")
        if not isinstance(values, Mapping):
            raise ConfigurationError(f"[{section}] must be a table")
        for key, value in values.items():
            if key not in sections[section]:
                raise ConfigurationError(f"unknown key {section}.{key}")
            types = sections[section][key]
            if value is not None and (not isinstance(value, types) or (isinstance(value, bool) and bool not in types)):
                names = " or ".join(t.__name__ for t in types)
                raise ConfigurationError(f"{section}.{key} must be {names}, got {value!r}")


def _in_unit(name: str, value: float, closed_low: bool = False) -> float:
    value = float(value)
    ok = (0.0 <= value <= 1.0) if closed_low else (0.0 < value <= 1.0)
    if not ok:
        raise RangeError(f"{name} = {value} outside {'[0, 1]' if closed_low else '(0, 1]'}")
    return value


def _build(data: dict, preset: Optional[str]) -> Scenario:
    src = data["source"]
    if src["kind"] not in SOURCE_KINDS:
        raise ConfigurationError(f"source.kind must be one of {SOURCE_KINDS}, got {src['kind']!r}")
    squeezing = float(src["squeezing"])
    if not 0 <= squeezing <= MAX_SQUEEZING:
        raise RangeError(f"source.squeezing = {squeezing} outside [0, {MAX_SQUEEZING}]")
    c = data["comb"]
    try:
        comb = CombConfig(
            teeth_count=c["teeth"],
            center_index=c["center"],
            pump_center=c["pump_center"],
            pump_width=float(c["pump_width"]),
            zeta1=float(c["zeta1"]),
            zeta2=float(c["zeta2"]),
            crystal_length_scale=float(c["length_scale"]),
            s1_target=float(c["s1"]),
            truncation=c["K"],
        )
    except RangeError as exc:
        raise RangeError(f"comb: {exc}") from None
    if abs(comb.s1_target) > MAX_SQUEEZING:
        raise RangeError(f"comb.s1 = {comb.s1_target} exceeds {MAX_SQUEEZING}")

    sub = data["subtraction"]
    if sub["kind"] not in SUBTRACTION_KINDS:
        raise ConfigurationError(f"subtraction.kind must be one of {SUBTRACTION_KINDS}, got {sub['kind']!r}")
    targets = sub["target"]
    targets = tuple(int(t) for t in (targets if isinstance(targets, list) else [targets]))
    T = _in_unit("subtraction.T", sub["T"])
    eta_sub = _in_unit("subtraction.eta", sub["eta"])
    if sub["kind"] == "two-photon-same-mode" and len(targets) != 1:
        raise ConfigurationError("subtraction.target must be a single mode for two-photon-same-mode")
    mode_count = 2 if src["kind"] == "tmsv" else comb.truncation
    for t in targets:
        if not 0 <= t < mode_count:
            raise RangeError(f"subtraction.target = {t} outside [0, {mode_count - 1}]")
    if len(set(targets)) != len(targets):
        raise ConfigurationError(f"subtraction.target entries must be distinct, got {list(targets)}")

    px = data["pixels"]
    count = int(px["count"])
    bell = data["bell"]
    inequality = bell["inequality"]
    if inequality not in KINDS:
        raise ConfigurationError(f"bell.inequality must be one of {KINDS}, got {inequality!r}")
    if src["kind"] == "tmsv" and count != 2:
        raise ConfigurationError(f"pixels.count = {count} but a tmsv source has exactly 2 parties")
    if count != PARTY_COUNT[inequality]:
        raise ConfigurationError(
            f"pixels.count = {count} does not match bell.inequality = {inequality!r} "
            f"(needs {PARTY_COUNT[inequality]} parties)"
        )
    if src["kind"] == "spopo" and count > comb.truncation:
        raise RangeError(f"pixels.count = {count} exceeds comb.K = {comb.truncation}")
    bounds = px["boundaries"]
    if bounds is not None:
        bounds = tuple(int(b) for b in bounds)
        if len(bounds) != count + 1 or bounds[0] != 0 or bounds[-1] != comb.teeth_count \
                or any(a >= b for a, b in zip(bounds, bounds[1:])):
            raise ConfigurationError(
                f"pixels.boundaries must be {count + 1} increasing indices from 0 to {comb.teeth_count}, got {list(bounds)}"
            )
    lo = data["lo"]
    lo_width = float(lo["width"])
    if not lo_width > 0:
        raise RangeError(f"lo.width = {lo_width} must be positive")
    det = data["detector"]
    eta_det = _in_unit("detector.eta", det["eta"])
    if det["loss_convention"] not in LOSS_CONVENTIONS:
        raise ConfigurationError(f"detector.loss_convention must be one of {LOSS_CONVENTIONS}")
    if bell["steps"] < 4:
        raise RangeError(f"bell.steps = {bell['steps']} must be >= 4")
    if bell["refine_top"] < 0 or bell["offset_steps"] < 1:
        raise RangeError("bell.refine_top must be >= 0 and bell.offset_steps >= 1")
    for key in ("abstol", "xtol", "ftol"):
        if not bell[key] > 0:
            raise RangeError(f"bell.{key} must be positive")
    if bell["angles"] is not None:
        angles = bell["angles"]
        if len(angles) != count or any(not isinstance(a, list) or len(a) != 2 for a in angles):
            raise ConfigurationError(f"bell.angles must be {count} pairs of angles")
        if not all(isinstance(x, _NUMBER) and math.isfinite(x) for a in angles for x in a):
            raise ConfigurationError("bell.angles must be finite numbers")
    offsets = bell["global_offsets"]
    if offsets is not None and (len(offsets) != count or offsets[0] != 0):
        raise ConfigurationError(f"bell.global_offsets must have {count} entries with the first equal to 0")
    return Scenario(
        raw=data,
        preset=preset,
        source=src["kind"],
        comb=comb,
        tmsv_squeezing=squeezing,
        subtraction=SubtractionSpec(sub["kind"], targets, T, eta_sub),
        party_count=count,
        boundaries=bounds,
        lo_center=None if lo["center"] is None else float(lo["center"]),
        lo_width=lo_width,
        detector_eta=eta_det,
        loss_convention=det["loss_convention"],
        inequality=inequality,
    )


def scenario_from_dict(data: Mapping, extra_sections: Mapping[str, dict] | None = None) -> Scenario:
    """Validate a parsed document (preset + sections) into a :class:`Scenario`.

    ``extra_sections`` names sections that are accepted and ignored here
    (the sweep reader uses this for ``[sweep]``).
    """
    data = dict(data)
    for name in extra_sections or {}:
        data.pop(name, None)
    _check_schema(data, SCHEMA)
    preset = data.pop("preset", None)
    if preset is not None and preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    merged = _merge(DEFAULTS, PRESETS[preset]) if preset else copy.deepcopy(DEFAULTS)
    merged = _merge(merged, data)
    return _build(merged, preset)


def parse_scenario(text: str, source: str = "<string>", extra_sections=None) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    return scenario_from_dict(data, extra_sections)


def read_toml(path) -> dict:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file; raises ``FileNotFoundError`` or :class:`ConfigurationError`."""
    return scenario_from_dict(read_toml(path))


def preset_scenario(name: str, **overrides) -> Scenario:
    scenario = scenario_from_dict({"preset": name})
    return scenario.with_overrides(**overrides) if overrides else scenario
