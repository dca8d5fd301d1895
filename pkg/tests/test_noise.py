import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levferro import noise
from levferro.errors import DomainError
from levferro.trap import MagnetParams

# literal CODATA values, kept separate from the package constants
KB, HB, MU0 = 1.380649e-23, 1.054571817e-34, 1.25663706212e-6


@pytest.fixture
def ref_magnet():
    return MagnetParams(20.77e-6, 7430.0, 6.89e5)


def test_thermal_field_noise_hand_oracle(ref_magnet):
    m = ref_magnet
    V = 4 / 3 * np.pi * m.radius**3
    I = 0.4 * 7430.0 * V * m.radius**2
    mu = 6.89e5 * V
    w0 = 2 * np.pi * 137.625
    s_b = 4 * KB * 4.18 * I * w0 / 3.96e4 / mu**2
    rep = noise.noise_budget(m, 4.18, 137.625, 3.96e4)
    assert rep.S_B == pytest.approx(s_b, rel=1e-6)
    assert 16e-15 <= rep.sqrt_S_B <= 23e-15
    assert rep.E_R_hbar == pytest.approx(s_b * V / (2 * MU0 * HB), rel=1e-6)
    assert 0.035 <= rep.E_R_hbar <= 0.07
    assert 80e-15 <= np.sqrt(rep.erl_S_B) <= 90e-15


def test_backaction_levels():
    s = noise.squid_backaction_field_psd(1.8e-6, 1.8e-6, 180e-6)
    assert s == pytest.approx(2 * HB / 1.8e-6 * (180e-6) ** 2, rel=1e-6)
    assert np.sqrt(s) == pytest.approx(1.7e-18, rel=0.3)
    excess = noise.squid_backaction_field_psd(1.8e-6, 1.8e-6, 180e-6, 1e3)
    assert excess == pytest.approx(1e3 * s)
    assert np.sqrt(excess) == pytest.approx(50e-18, rel=0.3)


def test_budget_sums_components(ref_magnet):
    rep = noise.noise_budget(ref_magnet, 4.18, 137.625, 3.96e4, L_i=1.8e-6, L_t=1.8e-6, coupling=180e-6)
    assert rep.S_B == pytest.approx(sum(rep.components.values()))
    assert set(rep.components) == {"thermal", "back_action"}
    d = rep.as_dict()
    assert d["units"]["S_B"] == "T^2/Hz"


@settings(max_examples=50, deadline=None)
@given(T=st.floats(1e-3, 300), Q=st.floats(1, 1e9), theta=st.floats(0.05, np.pi - 0.05))
def test_thermal_scalings(T, Q, theta):
    s = noise.thermal_torque_psd(T, 1e-20, 100.0, Q)
    assert noise.thermal_torque_psd(2 * T, 1e-20, 100.0, Q) == pytest.approx(2 * s)
    assert noise.thermal_torque_psd(T, 1e-20, 100.0, 2 * Q) == pytest.approx(s / 2)
    b = noise.field_psd_from_torque(s, 1e-8, theta)
    assert b * np.sin(theta) ** 2 == pytest.approx(noise.field_psd_from_torque(s, 1e-8, np.pi / 2))


@settings(max_examples=30, deadline=None)
@given(V=st.floats(1e-18, 1e-6))
def test_erl_is_one_hbar(V):
    assert noise.energy_resolution(noise.erl_field_psd(V), V) == pytest.approx(1.0)


def test_domain_errors():
    with pytest.raises(DomainError):
        noise.thermal_torque_psd(-1.0, 1e-20, 100.0, 10.0)
    with pytest.raises(DomainError):
        noise.field_psd_from_torque(1.0, 1e-8, 0.0)
    with pytest.raises(DomainError):
        noise.energy_resolution(-1.0, 1e-12)
    with pytest.raises(DomainError):
        noise.squid_backaction_field_psd(1e-6, 1e-6, 1e-4, excess_factor=0.5)


@settings(max_examples=40, deadline=None)
@given(s=st.floats(1e-40, 1e-20), v=st.floats(1e-18, 1e-6), k=st.floats(0.1, 10))
def test_energy_resolution_bilinear(s, v, k):
    e = noise.energy_resolution(s, v)
    assert noise.energy_resolution(k * s, v) == pytest.approx(k * e)
    assert noise.energy_resolution(s, k * v) == pytest.approx(k * e)


def test_report_consistency_and_dominance(ref_magnet):
    rep = noise.noise_budget(ref_magnet, 4.18, 137.625, 3.96e4, L_i=1.8e-6, L_t=1.8e-6, coupling=180e-6)
    assert rep.E_R_hbar * 2 * MU0 * HB / rep.V == pytest.approx(rep.S_B, rel=1e-8)
    assert rep.components["thermal"] / rep.components["back_action"] > 1e5


def test_thermal_torque_homogeneity():
    s = noise.thermal_torque_psd(4.0, 1e-20, 800.0, 1e4)
    for args in ((8.0, 1e-20, 800.0, 1e4), (4.0, 2e-20, 800.0, 1e4), (4.0, 1e-20, 1600.0, 1e4)):
        assert noise.thermal_torque_psd(*args) == pytest.approx(2 * s)
