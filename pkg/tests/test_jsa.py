import numpy as np
import pytest

from combbell.errors import ConfigurationError, DegenerateSourceError, RangeError
from combbell.jsa import CombConfig, JsaMatrix, build_jsa, decompose, phase_mismatch, squeezing_fraction

SMALL = CombConfig(teeth_count=64, pump_width=3.0, zeta2=2e-3, truncation=20)


def test_zero_mismatch_is_constant_along_antidiagonals():
    values = build_jsa(CombConfig(teeth_count=24, zeta1=0.0, zeta2=0.0, truncation=4)).values
    for total in range(2 * 24 - 1):
        diag = [values[m, total - m] for m in range(24) if 0 <= total - m < 24]
        assert np.ptp(diag) == 0.0


def test_matrix_is_exactly_symmetric():
    values = build_jsa(CombConfig(teeth_count=40, zeta1=0.03, zeta2=5e-3, truncation=4)).values
    assert np.array_equal(values, values.T)


def test_sinc_side_lobes_appear_with_mismatch():
    config = CombConfig(teeth_count=128, pump_width=20.0, zeta2=0.01, truncation=4)
    values = build_jsa(config).values
    # along the anti-diagonal through the centre the sinc crosses zero
    c = 64
    line = np.array([values[c + k, c - 1 - k] for k in range(0, 60)])
    assert line.min() < 0.0 < line.max()
    np.testing.assert_allclose(phase_mismatch(config), phase_mismatch(config).T)


def test_entries_follow_the_closed_form():
    config = CombConfig(teeth_count=16, pump_width=2.5, zeta1=0.02, zeta2=0.01, truncation=4)
    values = build_jsa(config).values
    m0 = config.center
    for m, q in [(0, 0), (3, 11), (7, 8), (15, 2)]:
        phi = 0.02 * (m + q - 2 * m0) + 0.01 * (m - q) ** 2
        env = np.exp(-((m + q - 2 * m0) ** 2) / (2 * 2.5**2))
        assert values[m, q] == pytest.approx(np.sinc(phi / np.pi) * env, abs=1e-15)


def test_two_by_two_eigensystem():
    c = 0.7
    basis = decompose(JsaMatrix(np.array([[0.0, c], [c, 0.0]])), 2, 1.0)
    np.testing.assert_allclose(np.abs(basis.eigenvalues), [c, c])
    assert sorted(basis.eigenvalues) == pytest.approx([-c, c])
    v = basis.eigenvectors
    assert np.abs(v.T @ v - np.eye(2)).max() < 1e-12
    for j in range(2):
        if basis.eigenvalues[j] > 0:
            np.testing.assert_allclose(v[:, j], [2**-0.5, 2**-0.5], atol=1e-12)
        else:
            np.testing.assert_allclose(np.abs(v[:, j]), [2**-0.5, 2**-0.5], atol=1e-12)
            assert v[0, j] * v[1, j] < 0


def test_diagonal_matrix_gives_standard_basis():
    basis = decompose(JsaMatrix(0.3 * np.eye(5)), 5, 1.0)
    np.testing.assert_allclose(basis.eigenvalues, 0.3)
    np.testing.assert_allclose(np.abs(basis.eigenvectors), np.eye(5), atol=1e-15)
    np.testing.assert_allclose(basis.squeezings, 1.0)


def test_full_reconstruction_and_orthonormality():
    jsa = build_jsa(SMALL)
    basis = decompose(jsa, 64, 1.0)
    v, lam = basis.eigenvectors, basis.eigenvalues
    assert np.abs(v.T @ v - np.eye(64)).max() < 1e-10
    assert np.abs((v * lam) @ v.T - jsa.values).max() < 1e-10


def test_ordering_scaling_and_sign_convention():
    basis = decompose(build_jsa(SMALL), 20, 0.8)
    mags = np.abs(basis.eigenvalues)
    assert np.all(np.diff(mags) <= 1e-15)
    assert basis.squeezings[0] == pytest.approx(0.8)
    np.testing.assert_allclose(basis.squeezings, 0.8 * basis.eigenvalues / basis.eigenvalues[0])
    v = basis.eigenvectors
    peak = v[np.argmax(np.abs(v), axis=0), np.arange(v.shape[1])]
    assert np.all(peak > 0)


def test_decompose_is_deterministic():
    a = decompose(build_jsa(SMALL), 20, 1.0)
    b = decompose(build_jsa(SMALL), 20, 1.0)
    assert np.array_equal(a.eigenvectors, b.eigenvectors)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)


def test_decompose_errors():
    jsa = build_jsa(CombConfig(teeth_count=8, truncation=2))
    with pytest.raises(RangeError):
        decompose(jsa, 9, 1.0)
    with pytest.raises(RangeError):
        decompose(jsa, 0, 1.0)
    with pytest.raises(DegenerateSourceError):
        decompose(JsaMatrix(np.zeros((3, 3))), 2, 1.0)


def test_config_validation():
    with pytest.raises(RangeError):
        CombConfig(teeth_count=1, truncation=1)
    with pytest.raises(RangeError):
        CombConfig(pump_width=0.0)
    with pytest.raises(RangeError):
        CombConfig(teeth_count=10, truncation=11)
    with pytest.raises(RangeError):
        CombConfig(s1_target=-0.1)
    with pytest.raises(ConfigurationError):
        CombConfig(zeta2=float("nan"))
    with pytest.raises(ConfigurationError):
        JsaMatrix(np.array([[0.0, 1.0], [2.0, 0.0]]))


def test_non_finite_entries_are_a_configuration_error():
    # the mismatch phase overflows to inf and sinc(inf) is undefined
    with pytest.raises(ConfigurationError):
        build_jsa(CombConfig(teeth_count=16, zeta2=1e307, crystal_length_scale=1e10, truncation=2))


def test_squeezing_fraction_limits_and_monotonicity():
    basis = decompose(build_jsa(SMALL), 20, 1.0)
    assert squeezing_fraction(basis, 0) == 0.0
    assert squeezing_fraction(basis, 64) == pytest.approx(1.0)
    fractions = [squeezing_fraction(basis, k) for k in range(65)]
    assert all(b >= a for a, b in zip(fractions, fractions[1:]))
    assert squeezing_fraction(basis, 5, "squared") >= squeezing_fraction(basis, 5, "abs")
    with pytest.raises(ConfigurationError):
        squeezing_fraction(basis, 5, "decibel")
    with pytest.raises(RangeError):
        squeezing_fraction(basis, 65)


def test_squeezing_fraction_monotone_on_long_tail():
    # hundreds of tiny eigenvalues: the fraction must still never step back
    basis = decompose(build_jsa(CombConfig()), 50, 0.7)
    fractions = [squeezing_fraction(basis, k) for k in range(basis.spectrum.size + 1)]
    assert all(b >= a for a, b in zip(fractions, fractions[1:]))
    assert fractions[-1] == 1.0


def test_desk_spectrum_decays():
    basis = decompose(build_jsa(CombConfig()), 50, 1.0)
    assert abs(basis.spectrum[49]) / abs(basis.spectrum[0]) < 0.05


def test_phase_table_overrides_model():
    table = np.zeros((8, 8))
    config = CombConfig(teeth_count=8, zeta2=0.5, truncation=2, phase_table=table)
    plain = CombConfig(teeth_count=8, zeta2=0.0, truncation=2)
    np.testing.assert_array_equal(build_jsa(config).values, build_jsa(plain).values)
    with pytest.raises(ConfigurationError):
        CombConfig(teeth_count=8, truncation=2, phase_table=np.zeros((4, 4)))
