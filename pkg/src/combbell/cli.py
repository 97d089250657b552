"""Command-line entry point ``combbell``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
Every CSV starts with a ``# combbell <version> scenario=<sha256>`` line and
every JSON document carries the same data under ``provenance``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bell import KINDS, MeasurementSettings
from .errors import CombBellError, NumericalError
from .gaussian import LOSS_CONVENTIONS, evaluate, marginalize_modes
from .jsa import build_jsa, decompose, squeezing_fraction
from .pipeline import heralded_state, party_state, run_pipeline, source_state
from .scenario import PRESETS, Scenario, read_toml, scenario_from_dict
from .search import SweepSpec, best_row, sweep

SWEEP_KEYS = {"s1", "T", "eta_sub", "eta_det", "lo_width", "boundaries", "workers"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def provenance_line(scenario: Scenario) -> str:
    return f"# combbell {__version__} scenario={scenario.digest()}"


def provenance(scenario: Scenario) -> dict:
    return {"tool": "combbell", "version": __version__, "scenario": scenario.digest(), "preset": scenario.preset}


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _csv(scenario: Scenario, header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(provenance_line(scenario) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _scenario(args) -> Scenario:
    path = getattr(args, "scenario", None)
    preset = getattr(args, "preset", None)
    if path and preset:
        raise UsageError("give either a scenario file or --preset, not both")
    if path:
        data = read_toml(path)
    elif preset:
        data = {"preset": preset}
    else:
        raise UsageError("a scenario file (--scenario/--config) or --preset is required")
    convention = getattr(args, "loss_convention", None)
    if convention:
        data = dict(data)
        data["detector"] = {**data.get("detector", {}), "loss_convention": convention}
    return scenario_from_dict(data)


def _dump(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=False) + "\n"


# ------------------------------------------------------------------ commands

def cmd_jsa(args) -> int:
    scenario = _scenario(args)
    values = build_jsa(scenario.comb).values
    M = values.shape[0]
    rows = ((m, q, repr(float(values[m, q]))) for m in range(M) for q in range(M))
    _write(args.out, _csv(scenario, ["m", "q", "value"], rows))
    return 0


def cmd_supermodes(args) -> int:
    scenario = _scenario(args)
    jsa = build_jsa(scenario.comb)
    K = scenario.comb.truncation
    basis = decompose(jsa, K, scenario.comb.s1_target)
    M = basis.teeth_count
    header = ["j", "lambda", "s"] + [f"v{m}" for m in range(M)]
    rows = (
        [j + 1, repr(float(basis.eigenvalues[j])), repr(float(basis.squeezings[j]))]
        + [repr(float(v)) for v in basis.eigenvectors[:, j]]
        for j in range(K)
    )
    _write(args.out, _csv(scenario, header, rows))
    summary = {
        "K": K,
        "squeezing_fraction": squeezing_fraction(basis, K, args.measure),
        "measure": args.measure,
        "provenance": provenance(scenario),
    }
    if args.out not in (None, "-"):
        sys.stdout.write(_dump(summary))
    return 0


def _grid_axis(text: str) -> np.ndarray:
    """``start:stop:step`` with both ends included."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"--grid must be start:stop:step, got {text!r}") from None
    if not (step > 0 and stop > start and all(map(math.isfinite, (start, stop, step)))):
        raise UsageError("--grid needs finite start < stop and step > 0")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    if count > 2001:
        raise UsageError("--grid has more than 2001 points per axis")
    return start + step * np.arange(count)


def cmd_wigner(args) -> int:
    scenario = _scenario(args)
    state, basis = source_state(scenario)
    heralded, probability = heralded_state(scenario, state)
    parties, _ = party_state(scenario, heralded, basis)
    if not 1 <= args.mode <= parties.n_modes:
        raise UsageError(f"--mode must lie in [1, {parties.n_modes}]")
    single = marginalize_modes(parties, [args.mode - 1])
    axis = _grid_axis(args.grid)
    qq, pp = np.meshgrid(axis, axis, indexing="ij")
    values = evaluate(single, np.stack([qq, pp], axis=-1))
    rows = (
        (repr(float(qq[i, j])), repr(float(pp[i, j])), repr(float(values[i, j])))
        for i in range(axis.size)
        for j in range(axis.size)
    )
    _write(args.out, _csv(scenario, ["q", "p", "W"], rows))
    return 0


def _parse_angles(text: str, party_count: int) -> MeasurementSettings:
    try:
        values = [float(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--angles must be comma-separated numbers, got {text!r}") from None
    if len(values) != 2 * party_count or not all(math.isfinite(v) for v in values):
        raise UsageError(f"--angles needs {2 * party_count} finite values (a1,a2,b1,b2,...)")
    return MeasurementSettings(np.array(values).reshape(party_count, 2))


def _load_settings(path: str) -> MeasurementSettings:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from None
    data = data.get("outcome", data)
    if "settings" not in data:
        raise UsageError(f"{path}: no 'settings' entry")
    return MeasurementSettings.from_dict(data["settings"])


def _outcome_document(scenario: Scenario, result) -> dict:
    return {
        "provenance": provenance(scenario),
        "herald_probability": result.herald_probability,
        "outcome": result.outcome.to_dict(),
    }


def cmd_bell(args) -> int:
    scenario = _scenario(args)
    if args.inequality and args.inequality != scenario.inequality:
        data = scenario.to_dict()
        data["bell"]["inequality"] = args.inequality
        scenario = scenario_from_dict(data)
    settings = None
    if args.angles and args.settings:
        raise UsageError("give either --angles or --settings")
    if args.angles:
        settings = _parse_angles(args.angles, scenario.party_count)
    elif args.settings:
        settings = _load_settings(args.settings)
    result = run_pipeline(scenario, settings)
    _write(args.out, _dump(_outcome_document(scenario, result)))
    return 0


def cmd_run(args) -> int:
    scenario = _scenario(args)
    result = run_pipeline(scenario)
    _write(args.out, _dump(_outcome_document(scenario, result)))
    if args.figures:
        import os

        os.makedirs(args.figures, exist_ok=True)
        sub = argparse.Namespace(scenario=args.scenario, preset=args.preset,
                                 loss_convention=args.loss_convention)
        if scenario.source == "spopo":
            cmd_jsa(argparse.Namespace(**vars(sub), out=os.path.join(args.figures, "jsa.csv")))
            cmd_supermodes(argparse.Namespace(**vars(sub), out=os.path.join(args.figures, "supermodes.csv"),
                                              measure="abs"))
        cmd_wigner(argparse.Namespace(**vars(sub), out=os.path.join(args.figures, "wigner.csv"),
                                      mode=1, grid="-4:4:0.1"))
    return 0


def _range(name: str, value) -> tuple:
    if isinstance(value, dict):
        unknown = set(value) - {"start", "stop", "step"}
        if unknown or not {"start", "stop", "step"} <= set(value):
            raise UsageError(f"sweep.{name} range needs exactly start, stop, step")
        start, stop, step = (float(value[k]) for k in ("start", "stop", "step"))
        if not step > 0 or stop < start:
            raise UsageError(f"sweep.{name}: need step > 0 and stop >= start")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 12) for i in range(count))
    if isinstance(value, list) and value:
        return tuple(value)
    raise UsageError(f"sweep.{name} must be a non-empty list or a start/stop/step table")


def load_sweep(path: str, workers: Optional[int] = None, timing: bool = True) -> SweepSpec:
    data = read_toml(path)
    ranges = data.get("sweep", {})
    if not isinstance(ranges, dict):
        raise UsageError("[sweep] must be a table")
    unknown = set(ranges) - SWEEP_KEYS
    if unknown:
        raise UsageError(f"unknown key(s) in [sweep]: {sorted(unknown)}")
    base = scenario_from_dict(data, extra_sections={"sweep": {}})
    kwargs = {name: _range(name, ranges[name]) for name in SWEEP_KEYS - {"workers", "boundaries"} if name in ranges}
    if "boundaries" in ranges:
        kwargs["boundaries"] = tuple(tuple(b) for b in ranges["boundaries"])
    file_workers = ranges.get("workers")
    return SweepSpec(base=base, workers=workers or file_workers, timing=timing, **kwargs)


def cmd_sweep(args) -> int:
    spec = load_sweep(args.spec, args.workers, timing=not args.no_timing)
    rows = sweep(spec, args.out, resume=args.resume, provenance=provenance_line(spec.base))
    best = best_row(rows)
    summary = {
        "rows": len(rows),
        "errors": sum(1 for r in rows if r["error"]),
        "best": best,
        "provenance": provenance(spec.base),
    }
    sys.stdout.write(_dump(summary))
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="combbell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"combbell {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_args(p, flag="--scenario"):
        names = [flag] + (["--scenario"] if flag != "--scenario" else ["--config"])
        p.add_argument(*names, dest="scenario", help="scenario TOML file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="use a built-in preset instead of a file")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--loss-convention", choices=LOSS_CONVENTIONS,
                       help="override detector.loss_convention")

    p = sub.add_parser("jsa", help="export the coupling matrix as m,q,value CSV")
    scenario_args(p, "--config")
    p.set_defaults(func=cmd_jsa)

    p = sub.add_parser("supermodes", help="export eigenvalues, squeezings and eigenvectors")
    scenario_args(p, "--config")
    p.add_argument("--measure", choices=("abs", "squared"), default="abs")
    p.set_defaults(func=cmd_supermodes)

    p = sub.add_parser("wigner", help="export one party's heralded Wigner function on a grid")
    scenario_args(p, "--state")
    p.add_argument("--mode", type=int, default=1, help="party mode, counted from 1")
    p.add_argument("--grid", default="-3:3:0.3", help="axis as start:stop:step, used for q and p")
    p.set_defaults(func=cmd_wigner)

    p = sub.add_parser("bell", help="Bell value and correlator table as JSON")
    scenario_args(p)
    p.add_argument("--inequality", choices=KINDS)
    p.add_argument("--angles", help="comma-separated a1,a2,b1,b2,... (radians); default: search")
    p.add_argument("--settings", help="take settings from an outcome JSON file")
    p.set_defaults(func=cmd_bell)

    p = sub.add_parser("sweep", help="parameter sweep to CSV")
    p.add_argument("--spec", required=True, help="scenario TOML with a [sweep] section")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", action="store_true", help="keep rows already in --out")
    p.add_argument("--workers", type=int, help="process count (default: COMBBELL_WORKERS or CPU count)")
    p.add_argument("--no-timing", action="store_true", help="leave the ms column empty (bitwise-reproducible output)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("run", help="full pipeline; outcome JSON plus optional figure CSVs")
    scenario_args(p)
    p.add_argument("--figures", help="directory for jsa/supermodes/wigner CSVs")
    p.set_defaults(func=cmd_run)
    return parser


VALUE_FLAGS = ("--grid", "--angles")


def _attach_values(argv: Sequence[str]) -> list[str]:
    """Turn ``--grid -4:4:0.1`` into ``--grid=-4:4:0.1`` so argparse keeps leading minus signs."""
    out: list[str] = []
    items = list(argv)
    i = 0
    while i < len(items):
        if items[i] in VALUE_FLAGS and i + 1 < len(items):
            out.append(f"{items[i]}={items[i + 1]}")
            i += 2
        else:
            out.append(items[i])
            i += 1
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_attach_values(sys.argv[1:] if argv is None else argv))
    if getattr(args, "workers", None) is not None and args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"combbell: numerical error: {exc}", file=sys.stderr)
        return 2
    except (CombBellError, UsageError, FileNotFoundError) as exc:
        print(f"combbell: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
