"""Forward noise budget for the alpha-mode torque magnetometer.

All spectral densities are one-sided.  Field noise is referred to the magnet
through the torque ``mu * B * sin(theta)``; energy resolution uses only the
magnet volume.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .constants import HBAR, K_B, MU_0
from .errors import DomainError
from .trap import MagnetParams


def _positive(**kw):
    for k, v in kw.items():
        if not np.all(np.asarray(v, float) > 0):
            raise DomainError(f"{k} must be > 0, got {v!r}")


def thermal_torque_psd(T, inertia, omega0, Q):
    """Thermal torque PSD 4 k_B T I omega0 / Q (N^2 m^2 / Hz)."""
    _positive(T=T, inertia=inertia, omega0=omega0, Q=Q)
    return 4.0 * K_B * T * inertia * omega0 / Q


def field_psd_from_torque(S_tau, moment, theta):
    """Equivalent field PSD S_tau / (mu sin(theta))^2 (T^2/Hz)."""
    _positive(moment=moment)
    if np.any(np.asarray(S_tau) < 0):
        raise DomainError("S_tau must be >= 0")
    st = np.sin(theta)
    if np.any(np.abs(st) < 1e-12):
        raise DomainError("sin(theta) = 0: applied field exerts no torque")
    return S_tau / (moment * st) ** 2


def energy_resolution(S_B, V):
    """E_R = S_B V / (2 mu0), in units of hbar."""
    _positive(S_B=S_B, V=V)
    return S_B * V / (2.0 * MU_0 * HBAR)


def erl_field_psd(V):
    """Field PSD at which E_R = hbar for a magnet of volume V (T^2/Hz)."""
    _positive(V=V)
    return 2.0 * MU_0 * HBAR / V


def squid_backaction_field_psd(L_i, L_t, coupling, excess_factor=1.0):
    """Back-action field PSD at the magnet from pick-up coil current noise.

    The current PSD ``2 hbar L_i / L_t**2`` is scaled by ``excess_factor``
    (in power) and converted to field with the coil coupling ``coupling``
    (T/A), taking the pick-up coil to couple like the actuation coils.
    """
    _positive(L_i=L_i, L_t=L_t, coupling=coupling)
    if not np.all(np.asarray(excess_factor, float) >= 1.0):
        raise DomainError(f"excess_factor must be >= 1, got {excess_factor!r}")
    return excess_factor * 2.0 * HBAR * L_i / L_t**2 * coupling**2


@dataclass
class NoiseReport:
    S_tau: float
    S_B: float
    sqrt_S_B: float
    E_R_hbar: float
    V: float
    erl_S_B: float
    components: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["units"] = {
            "S_tau": "N^2 m^2/Hz",
            "S_B": "T^2/Hz",
            "sqrt_S_B": "T/sqrt(Hz)",
            "E_R_hbar": "hbar",
            "V": "m^3",
            "erl_S_B": "T^2/Hz",
            "components": "T^2/Hz",
        }
        return out


def noise_budget(magnet: MagnetParams, T, f0, Q, theta=np.pi / 2, L_i=None, L_t=None,
                 coupling=None, excess_factor=1.0) -> NoiseReport:
    """Thermal plus (optional) back-action field noise of the alpha mode at f0.

    Back-action is included when ``L_i``, ``L_t`` and ``coupling`` are all given.
    """
    s_tau = thermal_torque_psd(T, magnet.inertia, 2.0 * np.pi * f0, Q)
    comps = {"thermal": float(field_psd_from_torque(s_tau, magnet.moment, theta))}
    if L_i is not None and L_t is not None and coupling is not None:
        comps["back_action"] = float(squid_backaction_field_psd(L_i, L_t, coupling, excess_factor))
    s_b = sum(comps.values())
    V = magnet.volume
    return NoiseReport(
        S_tau=float(s_tau),
        S_B=float(s_b),
        sqrt_S_B=float(np.sqrt(s_b)),
        E_R_hbar=float(energy_resolution(s_b, V)),
        V=float(V),
        erl_S_B=float(erl_field_psd(V)),
        components=comps,
    )
