"""End-to-end scenario execution: source -> subtraction -> pixels -> Bell search."""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bell import BellOutcome, GaussianCorrelatorModel, MeasurementSettings, evaluate_inequality
from .errors import CombBellError
from .gaussian import (
    GaussianMixture,
    apply_loss,
    apply_map,
    beam_splitter,
    product_state,
    squeezed_covariance,
)
from .jsa import SupermodeBasis, build_jsa, decompose
from .pixel import PixelMap, PixelPartition, build_pixel_map, to_pixels
from .scenario import Scenario
from .search import AngleGrid, optimize
from .subtraction import TapSpec, subtract_one_per_mode, subtract_two_same_mode

__all__ = ["PipelineResult", "source_state", "heralded_state", "party_state", "run_pipeline", "tmsv"]


@contextmanager
def stage(name: str):
    """Prefix errors raised inside a pipeline stage with the stage name."""
    try:
        yield
    except CombBellError as exc:
        if not getattr(exc, "stage", None):
            exc.stage = name
            if exc.args:
                exc.args = (f"[{name}] {exc.args[0]}",) + exc.args[1:]
        raise


@dataclass(frozen=True)
class PipelineResult:
    outcome: BellOutcome
    herald_probability: float
    state: GaussianMixture
    basis: Optional[SupermodeBasis]
    pixel_map: Optional[PixelMap]
    scenario: Scenario


def tmsv(s: float) -> GaussianMixture:
    """Two-mode squeezed vacuum from two opposite single-mode squeezers on a 50:50 splitter."""
    state = product_state([squeezed_covariance(s), squeezed_covariance(-s)])
    return apply_map(state, beam_splitter(0.5), [0, 1])


def source_state(scenario: Scenario) -> tuple[GaussianMixture, Optional[SupermodeBasis]]:
    if scenario.source == "tmsv":
        with stage("source"):
            return tmsv(scenario.tmsv_squeezing), None
    with stage("jsa"):
        jsa = build_jsa(scenario.comb)
        basis = decompose(jsa, scenario.comb.truncation, scenario.comb.s1_target)
    with stage("source"):
        state = product_state([squeezed_covariance(s) for s in basis.squeezings])
    return state, basis


def heralded_state(scenario: Scenario, state: GaussianMixture) -> tuple[GaussianMixture, float]:
    sub = scenario.subtraction
    with stage("subtraction"):
        if sub.kind == "none":
            return state, 1.0
        taps = [TapSpec(t, sub.T, sub.eta) for t in sub.targets]
        if sub.kind == "two-photon-same-mode":
            return subtract_two_same_mode(state, taps[0])
        return subtract_one_per_mode(state, taps)


def party_state(scenario: Scenario, state: GaussianMixture,
                basis: Optional[SupermodeBasis]) -> tuple[GaussianMixture, Optional[PixelMap]]:
    with stage("pixels"):
        if basis is None:
            if scenario.detector_eta < 1.0:
                state = apply_loss(state, scenario.detector_eta, range(state.n_modes), scenario.loss_convention)
            return state, None
        partition = PixelPartition(
            teeth_count=basis.teeth_count,
            party_count=scenario.party_count,
            boundaries=scenario.boundaries,
            lo_center=scenario.lo_center,
            lo_width=scenario.lo_width,
        )
        pmap = build_pixel_map(basis, partition)
        return to_pixels(state, pmap, scenario.detector_eta, scenario.loss_convention), pmap


def fixed_settings(scenario: Scenario) -> Optional[MeasurementSettings]:
    bell = scenario.bell
    if bell["angles"] is None:
        return None
    return MeasurementSettings(np.asarray(bell["angles"], dtype=float), bell["global_offsets"])


def search_outcome(scenario: Scenario, state: GaussianMixture,
                   settings: Optional[MeasurementSettings] = None) -> BellOutcome:
    bell = scenario.bell
    model = GaussianCorrelatorModel(state, bell["abstol"])
    with stage("bell"):
        settings = settings or fixed_settings(scenario)
        if settings is not None:
            return evaluate_inequality(model, scenario.inequality, settings, bell["abstol"])
        grid = AngleGrid(bell["steps"], bell["offsets"], bell["offset_steps"])
        return optimize(model, scenario.inequality, grid, bell["refine_top"],
                        xtol=bell["xtol"], ftol=bell["ftol"], abstol=bell["abstol"])


def run_pipeline(scenario: Scenario, settings: Optional[MeasurementSettings] = None) -> PipelineResult:
    """Run every stage; ``settings`` (or ``bell.angles``) skips the angle search."""
    state, basis = source_state(scenario)
    heralded, probability = heralded_state(scenario, state)
    parties, pmap = party_state(scenario, heralded, basis)
    outcome = search_outcome(scenario, parties, settings)
    return PipelineResult(outcome, probability, parties, basis, pmap, scenario)
