import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levferro import axion
from levferro.errors import ConfigError, DomainError
from levferro.trap import MagnetParams

ORACLE = json.loads((Path(__file__).parent / "fixtures" / "axion_hand_oracle.json").read_text())
CURRENT = axion.SensorConfig(MagnetParams(20e-6, 7430.0, 6.91e5), 4.2, 4e4, 100.0)
IMPROVED = axion.SensorConfig(MagnetParams(2e-3, 7430.0, 6.91e5), 0.05, 1e8, 10.0)
ENV = axion.AxionEnvironment()


def test_effective_field_matches_hand_oracle():
    tol = ORACLE["tolerance_rel"] * 10
    assert axion.tesla_in_ev2() == pytest.approx(ORACLE["steps"]["tesla_ev2"]["value"], rel=tol)
    assert axion.effective_field_per_coupling(ENV) == pytest.approx(ORACLE["expected"]["B_a_per_g_tesla"], rel=tol)
    assert axion.effective_field_per_coupling(ENV) == pytest.approx(2.1e-8, rel=0.1)


def test_mass_frequency_conversion():
    assert axion.frequency_to_mass(1.0) == pytest.approx(ORACLE["expected"]["mass_ev_at_1hz"], rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(f=st.floats(1e-6, 1e9))
def test_mass_frequency_round_trip(f):
    assert axion.mass_to_frequency(axion.frequency_to_mass(f)) == pytest.approx(f, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(rho=st.floats(0.01, 10.0), v=st.floats(1e-5, 1e-2))
def test_field_scales_as_sqrt_rho_times_v(rho, v):
    ref = axion.effective_field_per_coupling(ENV)
    val = axion.effective_field_per_coupling(axion.AxionEnvironment(rho, v))
    assert val == pytest.approx(ref * np.sqrt(rho / 0.4) * v / 1e-3, rel=1e-10)


def test_coherence_time_variants():
    assert axion.coherence_time(1.0) == pytest.approx(1e6 / (2 * np.pi))
    assert axion.coherence_time(1.0, "literal") == pytest.approx(1e6 / (2 * np.pi) ** 2)
    with pytest.raises(DomainError):
        axion.coherence_time(1.0, "other")


def test_snr_regimes():
    assert axion.snr(2.0, 4.0, 10.0, 100.0) == pytest.approx(10.0)
    assert axion.snr(2.0, 4.0, 100.0, 1.0) == pytest.approx(10.0)
    with pytest.raises(DomainError):
        axion.snr(0.0, 1.0, 1.0, 1.0)


def test_reach_curve_shape():
    for sensor in (CURRENT, IMPROVED):
        c = axion.exclusion_curve(sensor, ENV)
        low = c.g_limit[c.frequency < 0.005]
        assert np.ptp(np.log(low)) < 1e-12
        assert 0.2 <= axion.log_slope(c, 1.0, 1e3) <= 0.3
    cur = axion.exclusion_curve(CURRENT, ENV)
    imp = axion.exclusion_curve(IMPROVED, ENV)
    assert np.all(imp.g_limit < cur.g_limit)


def test_limit_equals_snr_one():
    c = axion.exclusion_curve(CURRENT, ENV)
    B = c.g_limit * axion.effective_field_per_coupling(ENV)
    snr = axion.snr(B, float(CURRENT.field_psd()), axion.YEAR, axion.coherence_time(c.frequency))
    np.testing.assert_allclose(snr, 1.0, rtol=1e-10)


def test_tuned_resonance_slopes():
    c = axion.exclusion_curve(CURRENT, ENV, tuning="tuned")
    assert axion.log_slope(c, 1e-4, 1e-3) == pytest.approx(0.5, abs=1e-6)
    assert axion.log_slope(c, 1.0, 1e3) == pytest.approx(0.75, abs=1e-6)


def test_reach_validation():
    with pytest.raises(DomainError):
        axion.exclusion_curve(CURRENT, ENV, t_int=0.0)
    with pytest.raises(DomainError):
        axion.exclusion_curve(CURRENT, ENV, freq_grid=[-1.0, 1.0])
    with pytest.raises(DomainError):
        axion.exclusion_curve(CURRENT, ENV, tuning="swept")
    with pytest.raises(DomainError):
        axion.AxionEnvironment(velocity=1.5)


def test_reference_bounds(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("frequency_hz,g_limit,label\n1e-3,1e-13,red giants\n1,1e-13,red giants\n0.1,2e-12,solar\n")
    b = axion.load_reference_bounds(p)
    assert list(b) == ["red giants", "solar"]
    np.testing.assert_allclose(b["red giants"][0], [1e-3, 1.0])
    (tmp_path / "e.csv").write_text("")
    assert axion.load_reference_bounds(tmp_path / "e.csv") == {}
    (tmp_path / "bad.csv").write_text("frequency_hz,g_limit,label\n1e-3,abc,x\n")
    with pytest.raises(ConfigError, match="line 2"):
        axion.load_reference_bounds(tmp_path / "bad.csv")
    (tmp_path / "hdr.csv").write_text("f,g\n")
    with pytest.raises(ConfigError, match="line 1"):
        axion.load_reference_bounds(tmp_path / "hdr.csv")


@settings(max_examples=50, deadline=None)
@given(t=st.floats(1.0, 1e9))
def test_snr_continuous_at_coherence_time(t):
    below = axion.snr(1.0, 1.0, t * (1 - 1e-12), t)
    above = axion.snr(1.0, 1.0, t * (1 + 1e-12), t)
    assert below == pytest.approx(above, rel=1e-9)
