import numpy as np
import pytest

from combbell.errors import ConfigurationError, DimensionError, EmptyPixelError, RangeError
from combbell.gaussian import GaussianMixture, evaluate, mean_photon_number, product_state, squeezed_covariance, vacuum
from combbell.jsa import CombConfig, SupermodeBasis, build_jsa, decompose
from combbell.pixel import PixelPartition, build_pixel_map, even_boundaries, identity_map, lo_profile, to_pixels
from oracles import dropped_mode_marginal, random_physical_covariance

CONFIG = CombConfig(teeth_count=64, pump_width=3.0, zeta2=2e-3, truncation=8, s1_target=0.8)


@pytest.fixture(scope="module")
def basis():
    return decompose(build_jsa(CONFIG), CONFIG.truncation, CONFIG.s1_target)


def supermode_state(basis):
    return product_state([squeezed_covariance(s) for s in basis.squeezings])


def toy_basis(vectors):
    vectors = np.asarray(vectors, dtype=float)
    vectors = vectors / np.linalg.norm(vectors, axis=0)
    K = vectors.shape[1]
    lam = np.linspace(1.0, 0.5, K)
    return SupermodeBasis(eigenvalues=lam, eigenvectors=vectors, squeezings=lam, spectrum=lam)


def test_even_boundaries():
    assert even_boundaries(256, 2) == (0, 128, 256)
    assert even_boundaries(256, 4) == (0, 64, 128, 192, 256)
    assert even_boundaries(10, 3) == (0, 3, 7, 10)


def test_antisymmetric_mode_splits_with_opposite_signs():
    m = np.arange(16) - 7.5
    even = np.exp(-m**2 / 20)
    odd = m * np.exp(-m**2 / 20)
    pmap = build_pixel_map(toy_basis(np.column_stack([even, odd])), PixelPartition(16, 2, lo_width=4.0))
    P = pmap.projection
    assert P[0, 1] == pytest.approx(-P[1, 1], abs=1e-14)
    assert P[0, 1] != 0


def test_full_range_pixel_does_not_see_odd_modes():
    m = np.arange(16) - 7.5
    even = np.exp(-m**2 / 20)
    odd = m * np.exp(-m**2 / 20)
    pmap = build_pixel_map(toy_basis(np.column_stack([even, odd])), PixelPartition(16, 1, lo_width=4.0))
    assert abs(pmap.projection[0, 1]) < 1e-14


def test_completion_is_orthogonal(basis):
    for N in (1, 2, 4):
        pmap = build_pixel_map(basis, PixelPartition(64, N, lo_width=10.0))
        C = pmap.completion
        assert np.abs(C @ C.T - np.eye(8)).max() < 1e-10
        # the first N rows span the raw pixel rows
        P = pmap.projection
        residual = P - (P @ C[:N].T) @ C[:N]
        assert np.abs(residual).max() < 1e-10


def test_identity_map_leaves_state_unchanged():
    state = GaussianMixture([1.0], random_physical_covariance(np.random.default_rng(2), 3))
    out = to_pixels(state, identity_map(3, 3))
    np.testing.assert_allclose(out.covariances, state.covariances, atol=1e-15)


def test_vacuum_stays_vacuum(basis):
    pmap = build_pixel_map(basis, PixelPartition(64, 4, lo_width=10.0))
    out = to_pixels(vacuum(8), pmap, eta_det=0.7)
    np.testing.assert_allclose(out.covariances[0], np.eye(8), atol=1e-12)


def test_matches_dense_marginal_oracle():
    rng = np.random.default_rng(5)
    vectors = rng.normal(size=(12, 3))
    vectors, _ = np.linalg.qr(vectors)
    toy = toy_basis(vectors)
    pmap = build_pixel_map(toy, PixelPartition(12, 2, lo_width=5.0))
    state = GaussianMixture([1.0], random_physical_covariance(rng, 3, max_squeezing=0.5))
    out = to_pixels(state, pmap)
    transform = np.kron(pmap.completion, np.eye(2))
    for point in (np.zeros(4), rng.normal(size=4) * 0.7, rng.normal(size=4)):
        direct = dropped_mode_marginal(evaluate, state, transform, point, 2)
        assert evaluate(out, point) == pytest.approx(direct, abs=1e-6)


def test_energy_never_increases(basis):
    state = supermode_state(basis)
    total = mean_photon_number(state)
    for N, eta in ((2, 1.0), (4, 0.8), (8, 1.0)):
        out = to_pixels(state, build_pixel_map(basis, PixelPartition(64, N, lo_width=10.0)), eta)
        if N == 8 and eta == 1.0:
            assert mean_photon_number(out) == pytest.approx(total, rel=1e-10)
        else:
            assert mean_photon_number(out) < total


def test_normalisation_preserved(basis):
    state = GaussianMixture([1.5, -0.5], [np.eye(16) * 1.2, np.eye(16) * 1.4])
    out = to_pixels(state, build_pixel_map(basis, PixelPartition(64, 2, lo_width=10.0)), 0.6)
    assert out.total_weight == pytest.approx(1.0, abs=1e-12)


def test_relabelling_supermodes_changes_nothing():
    rng = np.random.default_rng(9)
    vectors, _ = np.linalg.qr(rng.normal(size=(16, 4)))
    lam = np.array([0.9, 0.9, 0.4, 0.4])
    a = SupermodeBasis(lam, vectors, lam, lam)
    perm = [1, 0, 3, 2]
    b = SupermodeBasis(lam[perm], vectors[:, perm], lam[perm], lam[perm])
    state_a = product_state([squeezed_covariance(s) for s in lam])
    state_b = product_state([squeezed_covariance(s) for s in lam[perm]])
    part = PixelPartition(16, 2, lo_width=6.0)
    out_a = to_pixels(state_a, build_pixel_map(a, part))
    out_b = to_pixels(state_b, build_pixel_map(b, part))
    np.testing.assert_allclose(out_a.covariances, out_b.covariances, atol=1e-12)


def test_empty_pixel_error():
    # both supermodes live on the first half only, so the second pixel is dark
    m = np.arange(16)
    first = np.where(m < 8, 1.0, 0.0)
    second = np.where(m < 8, np.cos(np.pi * m / 8), 0.0)
    with pytest.raises(EmptyPixelError):
        build_pixel_map(toy_basis(np.column_stack([first, second])), PixelPartition(16, 2, boundaries=(0, 8, 16)))


def test_partition_validation(basis):
    with pytest.raises(ConfigurationError):
        PixelPartition(64, 2, boundaries=(0, 32))
    with pytest.raises(ConfigurationError):
        PixelPartition(64, 2, boundaries=(0, 40, 30))
    with pytest.raises(ConfigurationError):
        PixelPartition(64, 2, boundaries=(1, 32, 64))
    with pytest.raises(RangeError):
        PixelPartition(64, 0)
    with pytest.raises(RangeError):
        PixelPartition(64, 2, lo_width=0.0)
    with pytest.raises(RangeError):
        build_pixel_map(basis, PixelPartition(64, 9))
    with pytest.raises(DimensionError):
        build_pixel_map(basis, PixelPartition(32, 2))
    pmap = build_pixel_map(basis, PixelPartition(64, 2))
    with pytest.raises(DimensionError):
        to_pixels(vacuum(3), pmap)
    with pytest.raises(RangeError):
        to_pixels(vacuum(8), pmap, eta_det=0.0)


def test_lo_profile_peaks_at_centre():
    profile = lo_profile(PixelPartition(64, 2, lo_center=20.0, lo_width=5.0))
    assert np.argmax(profile) == 20
    assert profile[20] == 1.0
