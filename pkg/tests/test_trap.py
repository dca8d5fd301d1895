import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levferro import trap
from levferro.constants import MU_0
from levferro.errors import DomainError, NoEquilibriumError
from levferro.trap import MagnetParams, TrapGeometry


def exact_image_energy(moment, a, r, radial):
    """Energy of a dipole in a superconducting sphere from the interior Neumann series.

    The induced scalar potential is expanded in regular solid harmonics; the
    series is summed numerically, independently of the closed forms under test.
    """
    l = np.arange(1, 4000)
    s = (r / a) ** 2
    if radial:
        terms = l * (l + 1) * s ** (l - 1)
    else:
        terms = 0.5 * (l + 1) ** 2 * s ** (l - 1)
    return MU_0 * moment**2 / (8.0 * np.pi * a**3) * np.sum(terms)


def test_reference_configuration(magnet, geom):
    fz, fb, eq = trap.mode_frequencies(magnet, geom)
    assert fz == pytest.approx(59.04, abs=0.05)
    assert fb == pytest.approx(478.5, abs=0.5)
    assert eq.z0 == pytest.approx(272.6e-6, rel=2e-3)


def test_gradient_vanishes_at_equilibrium(magnet, geom):
    eq = trap.find_equilibrium(magnet, geom)
    assert abs(trap.potential_gradient_r(magnet, geom, eq.r_eq)) < 1e-9 * magnet.mass * geom.g
    assert trap.curvature_z(magnet, geom, eq.r_eq) > 0


def test_radial_dipole_matches_exact_series(magnet, geom):
    a = geom.radius
    for r in (0.2 * a, 0.6 * a, 0.89 * a):
        model = trap.potential_energy(magnet, geom, r, beta=np.pi / 2) - magnet.mass * geom.g * (a - r)
        assert model == pytest.approx(exact_image_energy(magnet.moment, a, r, radial=True), rel=1e-9)


def test_transverse_dipole_close_to_exact_series(magnet, geom):
    a = geom.radius
    for frac in (0.0, 0.3, 0.6, 0.89):
        r = max(frac * a, 1e-9)
        model = trap.potential_energy(magnet, geom, r) - magnet.mass * geom.g * (a - r)
        exact = exact_image_energy(magnet.moment, a, r, radial=False)
        assert model == pytest.approx(exact, rel=0.05)


def test_tilt_stiffness_close_to_exact_at_operating_point(magnet, geom):
    eq = trap.find_equilibrium(magnet, geom)
    a, r = geom.radius, eq.r_eq
    exact_ratio = exact_image_energy(magnet.moment, a, r, True) / exact_image_energy(magnet.moment, a, r, False) - 1
    model_ratio = (r / a) ** 2
    assert model_ratio == pytest.approx(exact_ratio, rel=0.03)


def richardson(f, x, h):
    d1 = (f(x + h) - 2 * f(x) + f(x - h)) / h**2
    d2 = (f(x + h / 2) - 2 * f(x) + f(x - h / 2)) / (h / 2) ** 2
    return (4 * d2 - d1) / 3


@settings(max_examples=30, deadline=None)
@given(R=st.floats(5e-6, 100e-6), M=st.floats(2e5, 1.5e6))
def test_curvatures_match_finite_differences(R, M):
    geom = TrapGeometry(2.5e-3, 9.80674)
    mag = MagnetParams(R, 7430.0, M)
    try:
        eq = trap.find_equilibrium(mag, geom)
    except NoEquilibriumError:
        return
    r = eq.r_eq
    h = 1e-3 * (geom.radius - r)
    kz = richardson(lambda x: trap.potential_energy(mag, geom, x), r, h)
    kb = richardson(lambda b: trap.potential_energy(mag, geom, r, b), 0.0, 1e-2)
    assert kz == pytest.approx(trap.curvature_z(mag, geom, r), rel=1e-6)
    assert kb == pytest.approx(trap.curvature_beta(mag, geom, r), rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(R=st.floats(5e-6, 100e-6), M=st.floats(2e5, 1.5e6), rho=st.floats(5000, 9000))
def test_batch_forward_matches_scalar_path(R, M, rho):
    geom = TrapGeometry(2.5e-3, 9.80674)
    mag = MagnetParams(R, rho, M)
    try:
        fz, fb, _ = trap.mode_frequencies(mag, geom)
    except NoEquilibriumError:
        bz, bb = trap.forward_frequencies(R, M, rho, geom.radius, geom.g)
        assert np.isnan(bz) and np.isnan(bb)
        return
    bz, bb = trap.forward_frequencies(R, M, rho, geom.radius, geom.g)
    assert float(bz) == pytest.approx(fz, rel=1e-10)
    assert float(bb) == pytest.approx(fb, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(M=st.floats(3e5, 1.5e6))
def test_height_grows_with_magnetization(M):
    geom = TrapGeometry(2.5e-3, 9.80674)
    z1 = trap.find_equilibrium(MagnetParams(20e-6, 7430.0, M), geom).z0
    z2 = trap.find_equilibrium(MagnetParams(20e-6, 7430.0, 1.1 * M), geom).z0
    assert z2 > z1


def test_potential_domain(magnet, geom):
    with pytest.raises(DomainError):
        trap.potential_energy(magnet, geom, geom.radius)
    with pytest.raises(DomainError):
        trap.potential_energy(magnet, geom, -1e-6)


def test_no_equilibrium_for_weak_magnet(geom):
    with pytest.raises(NoEquilibriumError):
        trap.find_equilibrium(MagnetParams(20e-6, 7430.0, 1.0), geom)


def test_no_equilibrium_when_magnet_does_not_fit(geom):
    with pytest.raises(NoEquilibriumError):
        trap.find_equilibrium(MagnetParams(1.3e-3, 7430.0, 6.9e5), geom)


def test_invalid_magnet_rejected():
    with pytest.raises(DomainError):
        MagnetParams(-1e-6, 7430.0, 6.9e5)


def test_derived_properties(magnet):
    d = trap.derived_properties(magnet)
    V = 4 / 3 * np.pi * magnet.radius**3
    assert d["V"] == pytest.approx(V)
    assert d["m"] == pytest.approx(7430.0 * V)
    assert d["mu"] == pytest.approx(6.91e5 * V)
    assert d["I"] == pytest.approx(0.4 * 7430.0 * V * magnet.radius**2)


def test_alpha_and_shifted_beta(magnet):
    f = trap.alpha_frequency(magnet.moment, 1.38e-6, magnet.inertia)
    assert f == pytest.approx(np.sqrt(magnet.moment * 1.38e-6 / magnet.inertia) / (2 * np.pi))
    assert trap.beta_shifted(3.0, 4.0) == pytest.approx(5.0)


@settings(max_examples=40, deadline=None)
@given(frac=st.floats(0.05, 0.95), beta=st.floats(0, np.pi))
def test_potential_even_in_beta_with_minimum_at_zero(frac, beta):
    geom = TrapGeometry(2.5e-3, 9.80674)
    mag = MagnetParams(20e-6, 7430.0, 6.9e5)
    r = frac * geom.radius
    u = trap.potential_energy(mag, geom, r, beta)
    assert u == pytest.approx(trap.potential_energy(mag, geom, r, -beta), rel=1e-14)
    assert u >= trap.potential_energy(mag, geom, r, 0.0)


@settings(max_examples=50, deadline=None)
@given(fb=st.floats(1.0, 1e4), fa=st.floats(0.0, 1e4))
def test_beta_shift_identity(fb, fa):
    assert trap.beta_shifted(fb, fa) ** 2 - fa**2 == pytest.approx(fb**2, rel=1e-10, abs=1e-9 * fa**2)
