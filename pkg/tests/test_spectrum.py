import math

import numpy as np
import pytest

from laguerre_ebd.engine.basis import BasisSpec, gram_schmidt
from laguerre_ebd.engine.errors import DimensionMismatch, DomainError
from laguerre_ebd.engine.spectrum import (
    TARGET_COMPONENTS,
    ComponentCoeffs,
    LaguerreSpectrum,
    accumulate_power,
    beta_to_gamma,
    estimate_velocity,
    excited_bins,
    velocity_map,
)
from laguerre_ebd.engine.types import OMEGA_7, FrameRole, Sidedness, full_bins

P_HALF = math.exp(-0.5)


@pytest.fixture
def alphas():
    return (
        gram_schmidt(BasisSpec(2, P_HALF, Sidedness.TWO_SIDED)),
        gram_schmidt(BasisSpec(2, P_HALF, Sidedness.TWO_SIDED)),
        gram_schmidt(BasisSpec(2, P_HALF, Sidedness.CAUSAL)),
    )


def _gamma_cube(i_max, rho_x, rho_y, v_x, v_y):
    # I + rho_x (m_x - v_x m_z)^2 + rho_y (m_y - v_y m_z)^2, keeping the terms in the degree-2 cube
    g = np.zeros((3, 3, 3))
    g[0, 0, 0] = i_max
    g[2, 0, 0] = rho_x
    g[0, 2, 0] = rho_y
    g[1, 0, 1] = -2 * rho_x * v_x
    g[0, 1, 1] = -2 * rho_y * v_y
    g[0, 0, 2] = rho_x * v_x ** 2 + rho_y * v_y ** 2
    return g


def test_power_sums_selected_bins():
    coeffs = np.zeros((3, 3, 3, 2, 2))
    coeffs[0, 0, 0] = 1.0
    coeffs[2, 0, 0] = 2.0
    coeffs[1, 1, 1] = 5.0
    spectrum = LaguerreSpectrum(coeffs, bins=full_bins(2), index=6)
    power = accumulate_power(spectrum, bins=OMEGA_7)
    np.testing.assert_allclose(power.values, 5.0)
    assert power.role is FrameRole.POWER and power.index == 6
    np.testing.assert_allclose(accumulate_power(spectrum).values, 30.0)
    np.testing.assert_allclose(accumulate_power(spectrum, bins=OMEGA_7, c_norm=0.5).values, 2.5)


def test_spectrum_validation():
    with pytest.raises(DimensionMismatch):
        LaguerreSpectrum(np.zeros((3, 3, 2, 4, 4)), bins=frozenset())
    with pytest.raises(DomainError):
        LaguerreSpectrum(np.zeros((2, 2, 2, 4, 4)), bins=frozenset({(2, 0, 0)}))
    s = LaguerreSpectrum(np.zeros((3, 3, 3, 4, 5)), bins=OMEGA_7)
    assert s.degree == 2 and s.frame_shape == (4, 5)
    assert s.at(1, 2).shape == (3, 3, 3)


def test_beta_gamma_round_trip(alphas):
    gamma = _gamma_cube(1.0, -0.05, -0.04, -0.5, 0.25)
    ax, ay, az = alphas
    inv = [np.linalg.inv(a.matrix) for a in alphas]
    beta = np.einsum("abc,ai,bj,ck->ijk", gamma, *inv)
    back = beta_to_gamma(beta, ax, ay, az)
    np.testing.assert_allclose(back.values, gamma, atol=1e-12)


def test_beta_to_gamma_per_pixel(alphas):
    rng = np.random.Generator(np.random.PCG64(4))
    beta = rng.standard_normal((3, 3, 3, 4, 6))
    spectrum = LaguerreSpectrum(beta, bins=full_bins(2))
    per_pixel = beta_to_gamma(spectrum, *alphas)
    single = beta_to_gamma(spectrum.at(2, 3), *alphas)
    np.testing.assert_allclose(per_pixel.values[..., 2, 3], single.values, atol=1e-12)


def test_beta_to_gamma_degree_mismatch(alphas):
    with pytest.raises(DimensionMismatch):
        beta_to_gamma(np.zeros((2, 2, 2)), *alphas)


def test_velocity_from_target_components():
    model = estimate_velocity(ComponentCoeffs(_gamma_cube(1.0, -0.05, -0.05, -0.5, 0.25)))
    assert model.reliable
    assert model.v_x == pytest.approx(-0.5)
    assert model.v_y == pytest.approx(0.25)
    assert model.i_max == pytest.approx(1.0)


def test_degenerate_curvature_is_unreliable():
    model = estimate_velocity(ComponentCoeffs(_gamma_cube(1.0, 0.0, -0.05, -0.5, 0.25)))
    assert not model.reliable
    assert model.v_x == 0.0 and model.v_y == 0.0


def test_velocity_needs_pixel_for_maps():
    g = np.zeros((3, 3, 3, 2, 2))
    with pytest.raises(DomainError):
        estimate_velocity(ComponentCoeffs(g))
    with pytest.raises(DomainError):
        estimate_velocity(ComponentCoeffs(np.zeros((2, 2, 2))))


def test_velocity_map():
    g = np.zeros((3, 3, 3, 1, 2))
    g[..., 0, 0] = _gamma_cube(1.0, -0.05, -0.05, -0.5, 0.25)
    g[..., 0, 1] = _gamma_cube(1.0, 0.0, 0.0, 0.0, 0.0)
    v_x, v_y, reliable = velocity_map(ComponentCoeffs(g))
    assert reliable.tolist() == [[True, False]]
    assert v_x[0, 0] == pytest.approx(-0.5) and v_y[0, 0] == pytest.approx(0.25)
    assert np.isnan(v_x[0, 1])
    model = estimate_velocity(ComponentCoeffs(g), pixel=(0, 0))
    assert model.v_x == pytest.approx(-0.5)
    with pytest.raises(DimensionMismatch):
        velocity_map(ComponentCoeffs(np.zeros((3, 3, 3))))


def test_target_components_excite_seven_bins(alphas):
    assert excited_bins(TARGET_COMPONENTS, *alphas) == OMEGA_7


def test_causal_time_axis_spreads_excitation():
    causal = gram_schmidt(BasisSpec(2, P_HALF, Sidedness.CAUSAL))
    got = excited_bins({(0, 0, 1)}, causal, causal, causal)
    assert got == {(0, 0, 0), (0, 0, 1)}


def test_zero_components_are_unreliable_not_an_error():
    model = estimate_velocity(ComponentCoeffs(np.zeros((3, 3, 3))))
    assert not model.reliable
    assert (model.v_x, model.v_y) == (0.0, 0.0)
    v_x, v_y, reliable = velocity_map(ComponentCoeffs(np.zeros((3, 3, 3, 2, 3))))
    assert not reliable.any()
    assert np.isnan(v_x).all() and np.isnan(v_y).all()
