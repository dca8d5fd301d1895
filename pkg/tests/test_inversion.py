import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levferro import inversion, trap
from levferro.constants import MU_0
from levferro.errors import DegenerateFitError, DomainError, NoSolutionError
from levferro.inversion import MeasuredInput

A, G, RHO = 2.5e-3, 9.80674, 7430.0


def reference_inputs():
    return {
        "f_z": MeasuredInput(59.1, 0.1),
        "f_beta": MeasuredInput(478.3, 0.5),
        "density": MeasuredInput(RHO, 0.05 * RHO),
        "trap_radius": MeasuredInput(A, 0.1 * A),
        "g": MeasuredInput(G, 0.0),
    }


def test_reference_inversion():
    R, M = inversion.invert_magnet_params(59.1, 478.3, RHO, A, G)
    assert R == pytest.approx(20.78e-6, abs=0.1e-6)
    assert M == pytest.approx(6.91e5, abs=0.05e5)
    assert MU_0 * M == pytest.approx(0.87, abs=0.02)


@settings(max_examples=40, deadline=None)
@given(R=st.floats(5e-6, 100e-6), M=st.floats(2e5, 1.5e6))
def test_round_trip(R, M):
    fz, fb = trap.forward_frequencies(R, M, RHO, A, G)
    if not (np.isfinite(fz) and np.isfinite(fb)):
        return
    R2, M2 = inversion.invert_magnet_params(float(fz), float(fb), RHO, A, G)
    assert R2 == pytest.approx(R, rel=1e-6)
    assert M2 == pytest.approx(M, rel=1e-6)


def test_linear_uncertainty_in_range():
    r = inversion.propagate_uncertainty(reference_inputs(), "linear")
    assert 0.13e-6 <= r.sigma_R <= 0.30e-6
    assert 0.12e5 <= r.sigma_M <= 0.27e5
    assert -1 <= r.correlation_RM <= 1


def test_monte_carlo_agrees_with_linear_and_is_reproducible():
    lin = inversion.propagate_uncertainty(reference_inputs(), "linear")
    mc = inversion.propagate_uncertainty(reference_inputs(), "monte_carlo", n_samples=20_000, seed=3)
    again = inversion.propagate_uncertainty(reference_inputs(), "monte_carlo", n_samples=20_000, seed=3)
    assert mc.sigma_R == pytest.approx(lin.sigma_R, rel=0.15)
    assert mc.sigma_M == pytest.approx(lin.sigma_M, rel=0.15)
    assert mc.as_dict() == again.as_dict()
    assert mc.failed_fraction == 0.0


def test_exact_inputs_give_zero_sigma():
    inputs = {k: MeasuredInput(v.value, 0.0) for k, v in reference_inputs().items()}
    r = inversion.propagate_uncertainty(inputs, "linear")
    assert r.sigma_R == 0 and r.sigma_M == 0


def test_input_validation():
    with pytest.raises(DomainError):
        inversion.invert_magnet_params(-59.1, 478.3, RHO, A, G)
    with pytest.raises(DomainError):
        inversion.propagate_uncertainty({"f_z": MeasuredInput(59.1)}, "linear")
    with pytest.raises(DomainError):
        inversion.propagate_uncertainty(reference_inputs(), "bootstrap")
    with pytest.raises(DomainError):
        MeasuredInput(1.0, -0.1)


def test_inconsistent_frequencies_have_no_solution():
    with pytest.raises(NoSolutionError):
        inversion.invert_magnet_params(59.1, 5e6, RHO, A, G)


def test_viscous_radius():
    R = inversion.radius_from_viscous_linewidth(0.852, 1.13e-6, RHO)
    assert R == pytest.approx(20.6e-6, abs=0.2e-6)
    assert inversion.viscous_linewidth(R, 1.13e-6, RHO) == pytest.approx(0.852)
    with pytest.raises(DomainError):
        inversion.radius_from_viscous_linewidth(0.0, 1.13e-6, RHO)


def test_fit_intrinsic_beta(gen):
    fa = np.linspace(50, 200, 12)
    fp = np.hypot(478.0, fa) + 0.05 * gen.standard_normal(fa.size)
    f0, s = inversion.fit_intrinsic_beta(fa, fp, sigma=0.05)
    assert abs(f0 - 478.0) < 4 * s
    assert 0 < s < 0.1


def test_fit_intrinsic_beta_degenerate():
    with pytest.raises(DegenerateFitError):
        inversion.fit_intrinsic_beta([100.0, 200.0], [50.0, 60.0])
    with pytest.raises(DegenerateFitError):
        inversion.fit_intrinsic_beta([], [])


def test_knudsen():
    assert inversion.knudsen_number(1e-3, 20e-6) == pytest.approx(50.0)
    with pytest.raises(DomainError):
        inversion.knudsen_number(1e-3, 0.0)


def test_inversion_residual():
    R, M = inversion.invert_magnet_params(59.1, 478.3, RHO, A, G)
    fz, fb = trap.forward_frequencies(R, M, RHO, A, G)
    assert abs(fz / 59.1 - 1) < 1e-9
    assert abs(fb / 478.3 - 1) < 1e-9


def test_monte_carlo_converges():
    a = inversion.propagate_uncertainty(reference_inputs(), "monte_carlo", n_samples=100_000, seed=1)
    b = inversion.propagate_uncertainty(reference_inputs(), "monte_carlo", n_samples=200_000, seed=2)
    assert b.sigma_R == pytest.approx(a.sigma_R, rel=0.03)
    assert b.sigma_M == pytest.approx(a.sigma_M, rel=0.03)


def test_radius_decreases_with_f_z():
    radii = [inversion.invert_magnet_params(59.1 * (1 + d), 478.3, RHO, A, G)[0] for d in np.linspace(-0.05, 0.05, 11)]
    assert np.all(np.diff(radii) < 0)


@settings(max_examples=40, deadline=None)
@given(R=st.floats(1e-6, 1e-3), eta=st.floats(1e-7, 1e-4), rho=st.floats(1e3, 2e4))
def test_viscous_round_trip(R, eta, rho):
    lw = inversion.viscous_linewidth(R, eta, rho)
    assert inversion.radius_from_viscous_linewidth(lw, eta, rho) == pytest.approx(R, rel=1e-12)
