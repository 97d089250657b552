"""Acceptance criteria.  Each test records one PASS/FAIL line; the lines are
repeated in the pytest terminal summary and printed by ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time

import numpy as np
import pytest

from combbell.bell import GaussianCorrelatorModel, MeasurementSettings, evaluate_inequality
from combbell.gaussian import (
    GaussianMixture,
    apply_loss,
    apply_map,
    beam_splitter,
    evaluate,
    marginalize_modes,
    product_state,
    rotation,
    squeezed_covariance,
    symplectic_form,
)
from combbell.jsa import build_jsa, decompose, squeezing_fraction
from combbell.orthant import orthant_probability
from combbell.pipeline import heralded_state, party_state, run_pipeline, source_state
from combbell.pixel import to_pixels
from combbell.scenario import preset_scenario
from combbell.search import SweepSpec, rows_to_csv, sweep
from combbell.subtraction import TapSpec, subtract_one_per_mode, subtract_two_same_mode

import fock_oracle
from oracles import montecarlo_orthant, random_covariance, random_physical_covariance

RESULTS: dict[int, str] = {}

pytestmark = pytest.mark.acceptance


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title} | {detail}"
    RESULTS[number] = line
    print(line)
    assert ok, line


def pipeline_states():
    """Party-level states of the three presets."""
    out = {}
    for name in ("reference-tmsv", "paper-2party", "paper-4party"):
        scenario = preset_scenario(name)
        state, basis = source_state(scenario)
        heralded, _ = heralded_state(scenario, state)
        out[name] = party_state(scenario, heralded, basis)[0]
    return out


@pytest.fixture(scope="module")
def party_states():
    return pipeline_states()


# ------------------------------------------------------------------ 1

def test_reference_benchmark():
    start = time.perf_counter()
    result = run_pipeline(preset_scenario("reference-tmsv"))
    elapsed = time.perf_counter() - start
    value = result.outcome.value
    ok = abs(value - 1.024) <= 0.005 and elapsed < 300
    record(1, "reference-tmsv CHSH = 1.024 +- 0.005", ok, f"S2 = {value:.5f}, {elapsed:.2f} s")


# ------------------------------------------------------------------ 2

def test_two_party_sweep():
    s1 = tuple(round(0.3 + 0.2 * k, 10) for k in range(7))
    T = (0.90, 0.93, 0.96, 0.99)
    start = time.perf_counter()
    rows = sweep(SweepSpec(preset_scenario("paper-2party"), s1=s1, T=T, workers=1, timing=False))
    elapsed = time.perf_counter() - start
    scored = [r for r in rows if r["best_value"]]
    best = max(scored, key=lambda r: float(r["best_value"]))
    value = float(best["best_value"])
    preset_value = run_pipeline(preset_scenario("paper-2party")).outcome.value
    soft = "inside" if abs(value - 1.032) <= 0.02 else "outside"
    ok = 1.0 < value <= 1.05 and elapsed < 1800 and len(scored) == len(rows)
    record(2, "paper-2party sweep best CHSH in (1, 1.05]", ok,
           f"best S2 = {value:.5f} at s1={best['s1']}, T={best['T']}; preset S2 = {preset_value:.5f}; "
           f"soft target 1.032 +- 0.02 {soft}; {len(rows)} tuples in {elapsed:.1f} s")


# ------------------------------------------------------------------ 3

def test_four_party_no_violation():
    start = time.perf_counter()
    result = run_pipeline(preset_scenario("paper-4party"))
    elapsed = time.perf_counter() - start
    value = result.outcome.value
    soft = "inside" if abs(value - 0.757) <= 0.05 else "outside"
    ok = value <= 1.0 and elapsed < 7200
    record(3, "paper-4party |BK4| <= 1", ok,
           f"|BK4| = {value:.5f}; soft target 0.757 +- 0.05 {soft}; {elapsed:.1f} s")


# ------------------------------------------------------------------ 4

def random_positive_mixture(rng, n_modes):
    terms = int(rng.integers(1, 4))
    weights = rng.uniform(0.1, 1.0, size=terms)
    covs = [random_physical_covariance(rng, n_modes, max_squeezing=1.0) for _ in range(terms)]
    return GaussianMixture(weights / weights.sum(), covs)


def test_positive_wigner_lhv_suite():
    rng = np.random.default_rng(2024)
    worst = {"chsh": 0.0, "mk4": 0.0, "mermin4": 0.0}
    checks = 0
    for k in range(50):
        n = 2 if k < 25 else 4
        model = GaussianCorrelatorModel(random_positive_mixture(rng, n))
        kinds = ("chsh",) if n == 2 else ("mk4", "mermin4")
        for _ in range(200):
            settings = MeasurementSettings(rng.uniform(0, 2 * math.pi, size=(n, 2)))
            for kind in kinds:
                worst[kind] = max(worst[kind], evaluate_inequality(model, kind, settings).value)
                checks += 1
    ok = max(worst.values()) <= 1 + 1e-9
    detail = ", ".join(f"max {k} = {v:.6f}" for k, v in worst.items())
    record(4, "positive-Wigner states never exceed 1", ok, f"{checks} evaluations; {detail}")


# ------------------------------------------------------------------ 5

def test_fock_oracle_equivalence():
    # the number-basis truncation is itself the error source for s >= 0.6 at
    # cutoff 30, so the oracle is run converged and cutoff 30 is reported
    axis = np.linspace(-3, 3, 21)
    qq, pp = np.meshgrid(axis, axis, indexing="ij")
    grid = np.stack([qq, pp], axis=-1)
    worst_p = worst_w = worst_w30 = 0.0
    for s in (0.3, 0.6, 1.0):
        state, prob = subtract_two_same_mode(product_state([squeezed_covariance(s)]), TapSpec(0, 0.95))
        W = evaluate(state, grid)
        p90, rho90 = fock_oracle.two_photon_subtraction(s, 0.95, 90)
        _, rho30 = fock_oracle.two_photon_subtraction(s, 0.95, 30)
        worst_p = max(worst_p, abs(prob - p90))
        worst_w = max(worst_w, float(np.max(np.abs(W - fock_oracle.wigner_single(rho90, qq, pp)))))
        worst_w30 = max(worst_w30, float(np.max(np.abs(W - fock_oracle.wigner_single(rho30, qq, pp)))))
    ok = worst_p <= 1e-6 and worst_w <= 1e-6
    record(5, "two-photon subtraction matches number-basis simulation", ok,
           f"cutoff 90: max |dP| = {worst_p:.2e}, max |dW| = {worst_w:.2e}; "
           f"cutoff 30 oracle truncation leaves max |dW| = {worst_w30:.2e}")


# ------------------------------------------------------------------ 6

def bivariate(rho):
    return 0.25 + math.asin(rho) / (2 * math.pi)


def test_orthant_integrator():
    rng = np.random.default_rng(77)
    worst_z = 0.0
    for k in range(20):
        cov = random_covariance(rng, 4)
        p = orthant_probability(cov)
        mc, se = montecarlo_orthant(cov, np.ones(4), 10_000_000, seed=1000 + k)
        worst_z = max(worst_z, abs(p - mc) / se)
    worst_2d = 0.0
    for _ in range(20):
        r1, r2 = rng.uniform(-0.95, 0.95, size=2)
        block = np.zeros((4, 4))
        block[:2, :2] = [[1, r1], [r1, 1]]
        block[2:, 2:] = [[1, r2], [r2, 1]]
        perm = rng.permutation(4)
        scale = np.diag(rng.uniform(0.5, 2.0, size=4))
        cov = scale @ block[np.ix_(perm, perm)] @ scale
        worst_2d = max(worst_2d, abs(orthant_probability(cov) - bivariate(r1) * bivariate(r2)))
        lone = np.eye(4)
        lone[:2, :2] = [[1, r1], [r1, 1]]
        worst_2d = max(worst_2d, abs(orthant_probability(lone) - bivariate(r1) / 4))
    ok = worst_z <= 3.0 and worst_2d <= 1e-10
    record(6, "orthant probabilities vs Monte Carlo and closed form", ok,
           f"max |z| over 20 covariances (1e7 samples) = {worst_z:.2f}; embedded 2D max error = {worst_2d:.1e}")


# ------------------------------------------------------------------ 7

def symplectic_error(M):
    n = M.shape[0] // 2
    J = symplectic_form(n)
    return float(np.max(np.abs(M @ J @ M.T - J)))


def test_structural_invariants(party_states):
    rng = np.random.default_rng(5)
    # symplectic maps
    scenario = preset_scenario("paper-2party")
    state, basis = source_state(scenario)
    heralded, _ = heralded_state(scenario, state)
    _, pmap = party_state(scenario, heralded, basis)
    maps = [beam_splitter(T).matrix for T in (0.0, 0.3, 0.5, 0.99, 1.0)]
    maps += [rotation(phi).matrix for phi in rng.uniform(0, 2 * math.pi, 5)]
    maps += [np.diag([math.exp(s), math.exp(-s)]) for s in (-1.5, 0.2, 2.0)]
    maps.append(np.kron(pmap.completion, np.eye(2)))
    symp = max(symplectic_error(M) for M in maps)

    # marginals: two steps equal one step
    marg = 0.0
    for full in (party_states["paper-4party"], heralded):
        n = full.n_modes
        keep = sorted(rng.choice(n, size=2, replace=False).tolist())
        middle = sorted(set(keep) | set(rng.choice(n, size=min(n - 1, 3), replace=False).tolist()))
        one = marginalize_modes(full, keep)
        two = marginalize_modes(marginalize_modes(full, middle), [middle.index(m) for m in keep])
        marg = max(marg, float(np.max(np.abs(one.covariances - two.covariances))),
                   float(np.max(np.abs(one.weights - two.weights))))
        pts = rng.normal(size=(50, 4))
        marg = max(marg, float(np.max(np.abs(evaluate(one, pts) - evaluate(two, pts)))))

    # normalisation under every channel
    base = product_state([squeezed_covariance(s) for s in (0.9, -0.4, 0.2)])
    sub2, _ = subtract_two_same_mode(base, TapSpec(0, 0.97, 0.8))
    sub1, _ = subtract_one_per_mode(base, [TapSpec(0, 0.95), TapSpec(2, 0.9, 0.7)])
    images = [
        apply_map(sub2, beam_splitter(0.4), [0, 2]),
        apply_map(sub1, rotation(0.7), [1]),
        apply_loss(sub2, 0.6, [0, 1], "intensity"),
        apply_loss(sub1, 0.6, [2], "literal"),
        marginalize_modes(sub2, [0, 2]),
        to_pixels(heralded, pmap, 0.85),
        sub1,
        sub2,
    ]
    norm = max(abs(s.total_weight - 1.0) for s in images)
    # and by direct integration of a one-mode heralded Wigner function
    x, w = np.polynomial.legendre.leggauss(160)
    x, w = 12 * x, 12 * w
    qq, pp = np.meshgrid(x, x, indexing="ij")
    single = marginalize_modes(apply_loss(sub2, 0.7, [0]), [0])
    integral = float(np.sum(np.outer(w, w) * evaluate(single, np.stack([qq, pp], axis=-1))))
    norm = max(norm, abs(integral - 1.0))

    # parity of pipeline outputs
    parity = 0.0
    for state in party_states.values():
        pts = rng.normal(scale=1.5, size=(2000, state.dim))
        parity = max(parity, float(np.max(np.abs(evaluate(state, pts) - evaluate(state, -pts)))))

    ok = symp <= 1e-12 and marg <= 1e-10 and norm <= 1e-10 and parity <= 1e-10
    record(7, "structural invariants", ok,
           f"symplectic {symp:.1e}, marginal {marg:.1e}, normalisation {norm:.1e}, W(r) - W(-r) {parity:.1e}")


# ------------------------------------------------------------------ 8

def test_supermode_truncation():
    comb = preset_scenario("paper-2party").comb
    basis = decompose(build_jsa(comb), comb.truncation, comb.s1_target)
    total = basis.spectrum.size
    fractions = [squeezing_fraction(basis, K) for K in range(total + 1)]
    monotone = all(b >= a for a, b in zip(fractions, fractions[1:]))
    value = fractions[50]
    ok = value >= 0.98 and monotone and fractions[-1] == pytest.approx(1.0)
    record(8, "50 supermodes carry >= 98% of the squeezing", ok,
           f"fraction(50) = {value:.5f} (reference 0.9875), monotone in K over 0..{total}: {monotone}")


# ------------------------------------------------------------------ 9

def test_performance_and_determinism(party_states):
    rng = np.random.default_rng(9)
    settings = MeasurementSettings(rng.uniform(0, math.pi, size=(4, 2)))
    timings = []
    for _ in range(3):
        model = GaussianCorrelatorModel(party_states["paper-4party"], cache=False)
        start = time.perf_counter()
        evaluate_inequality(model, "mk4", settings)
        timings.append(time.perf_counter() - start)
    spec = dict(base=preset_scenario("paper-2party"), s1=(0.5, 0.9), T=(0.95, 0.99), timing=False)
    texts = {w: rows_to_csv(sweep(SweepSpec(workers=w, **spec)), "# determinism") for w in (1, 2, 4)}
    identical = len(set(texts.values())) == 1
    ok = max(timings) < 1.0 and identical
    record(9, "MK4 evaluation under 1 s and worker-independent sweeps", ok,
           f"MK4 evaluation {1000 * max(timings):.1f} ms (worst of 3); sweep CSV identical for 1/2/4 workers: {identical}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
