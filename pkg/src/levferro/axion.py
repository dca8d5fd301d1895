"""Axion-electron coupling reach of a thermally limited ferromagnetic gyroscope.

The axion gradient acts on electron spins like a magnetic field of amplitude
``g_aee sqrt(2 rho_a) v_a / (2 e)`` (natural Heaviside-Lorentz units, ħ = c = 1,
e = sqrt(4 pi alpha)).  The sensor is characterised by the thermal field PSD
``4 k_B T I omega0 / (mu^2 Q)`` at its resonance; the limit on ``g_aee`` is
the coupling giving SNR = 1 after the integration time, with coherent
averaging below the axion coherence time and incoherent averaging above it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .constants import ALPHA, C_LIGHT, EV, HBAR, MU_0, YEAR
from .errors import ConfigError, DomainError
from .noise import field_psd_from_torque, thermal_torque_psd
from .trap import MagnetParams

COHERENCE_Q = 1e6
GEV_PER_CM3 = 1e9 * EV * 1e6  # J/m^3
DEFAULT_GRID = (1e-4, 1e3, 200)


def tesla_in_ev2() -> float:
    """1 T expressed in natural Heaviside-Lorentz units (eV^2)."""
    hbar_c = HBAR * C_LIGHT / EV  # eV m
    joule_per_m3_in_ev4 = hbar_c**3 / EV
    return float(np.sqrt(joule_per_m3_in_ev4 / MU_0))


@dataclass(frozen=True)
class AxionEnvironment:
    """Local dark-matter density (GeV/cm^3) and virial speed (fraction of c)."""

    rho: float = 0.4
    velocity: float = 1e-3

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError(f"rho must be > 0, got {self.rho!r}")
        if not 0.0 <= self.velocity < 1.0:
            raise DomainError(f"velocity must lie in [0, 1), got {self.velocity!r}")


@dataclass(frozen=True)
class SensorConfig:
    magnet: MagnetParams
    temperature: float
    Q: float
    f0: float

    def __post_init__(self):
        for k in ("temperature", "Q", "f0"):
            if not getattr(self, k) > 0:
                raise DomainError(f"{k} must be > 0")

    def field_psd(self, f0=None):
        """Thermal S_B (T^2/Hz) at optimal orientation, resonance at ``f0``."""
        f0 = self.f0 if f0 is None else f0
        s_tau = thermal_torque_psd(self.temperature, self.magnet.inertia, 2.0 * np.pi * np.asarray(f0), self.Q)
        return field_psd_from_torque(s_tau, self.magnet.moment, np.pi / 2)


@dataclass
class ReachCurve:
    frequency: np.ndarray
    mass: np.ndarray
    g_limit: np.ndarray
    t_int: float
    metadata: dict = field(default_factory=dict)

    def rows(self):
        return zip(self.frequency, self.mass, self.g_limit)


def effective_field_per_coupling(env: AxionEnvironment) -> float:
    """B_a / g_aee in tesla."""
    rho_ev4 = env.rho * GEV_PER_CM3 * (HBAR * C_LIGHT / EV) ** 3 / EV
    e_hl = np.sqrt(4.0 * np.pi * ALPHA)
    b_ev2 = np.sqrt(2.0 * rho_ev4) * env.velocity / (2.0 * e_hl)
    return float(b_ev2 / tesla_in_ev2())


def mass_to_frequency(mass_ev):
    """Compton frequency m c^2 / (2 pi hbar) in Hz for a mass in eV."""
    m = np.asarray(mass_ev, float)
    if np.any(m <= 0):
        raise DomainError("mass must be > 0")
    return m * EV / (2.0 * np.pi * HBAR)


def frequency_to_mass(f):
    f = np.asarray(f, float)
    if np.any(f <= 0):
        raise DomainError("frequency must be > 0")
    return f * 2.0 * np.pi * HBAR / EV


def coherence_time(f, variant="omega"):
    """Axion coherence time (s).

    ``variant="omega"`` gives 1e6 / omega with omega = 2 pi f; ``"literal"``
    gives 1e6 / (2 pi omega).
    """
    f = np.asarray(f, float)
    if np.any(f <= 0):
        raise DomainError("frequency must be > 0")
    w = 2.0 * np.pi * f
    if variant == "omega":
        return COHERENCE_Q / w
    if variant == "literal":
        return COHERENCE_Q / (2.0 * np.pi * w)
    raise DomainError(f"unknown coherence-time variant {variant!r}")


def effective_time(t, t_coh):
    """t below the coherence time, sqrt(t t_coh) above it."""
    t = np.asarray(t, float)
    t_coh = np.asarray(t_coh, float)
    return np.where(t <= t_coh, t, np.sqrt(t * t_coh))


def snr(B_a, S_B, t, t_coh):
    """Signal-to-noise ratio (B_a^2 / S_B) t_eff."""
    for k, v in (("B_a", B_a), ("S_B", S_B), ("t", t), ("t_coh", t_coh)):
        if np.any(np.asarray(v) <= 0):
            raise DomainError(f"{k} must be > 0")
    out = np.asarray(B_a) ** 2 / np.asarray(S_B) * effective_time(t, t_coh)
    return float(out) if out.ndim == 0 else out


def default_frequency_grid():
    lo, hi, n = DEFAULT_GRID
    return np.logspace(np.log10(lo), np.log10(hi), n)


def exclusion_curve(sensor: SensorConfig, env: AxionEnvironment, t_int=YEAR, freq_grid=None,
                    tuning="fixed", coherence_variant="omega") -> ReachCurve:
    """g_aee giving SNR = 1 after ``t_int`` at each axion frequency.

    Parameters
    ----------
    tuning : {"fixed", "tuned"}
        ``"fixed"`` evaluates the thermal S_B at the sensor's own ``f0`` for
        every grid point; ``"tuned"`` moves the resonance to each grid
        frequency, so S_B follows ``omega0``.
    """
    if not t_int > 0:
        raise DomainError("t_int must be > 0")
    f = default_frequency_grid() if freq_grid is None else np.asarray(freq_grid, float)
    if f.ndim != 1 or f.size == 0 or np.any(f <= 0):
        raise DomainError("frequency grid must be a non-empty 1-D array of positive values")
    if tuning == "fixed":
        s_b = np.full(f.shape, float(sensor.field_psd()))
    elif tuning == "tuned":
        s_b = sensor.field_psd(f)
    else:
        raise DomainError(f"tuning must be 'fixed' or 'tuned', got {tuning!r}")
    b_conv = effective_field_per_coupling(env)
    t_eff = effective_time(t_int, coherence_time(f, coherence_variant))
    g = np.sqrt(s_b / t_eff) / b_conv
    meta = {
        "sensor": {
            "radius_m": sensor.magnet.radius,
            "density_kg_m3": sensor.magnet.density,
            "magnetization_a_m": sensor.magnet.magnetization,
            "temperature_k": sensor.temperature,
            "Q": sensor.Q,
            "f0_hz": sensor.f0,
        },
        "environment": {"rho_gev_cm3": env.rho, "velocity_c": env.velocity},
        "t_int_s": float(t_int),
        "tuning": tuning,
        "coherence_variant": coherence_variant,
        "B_a_per_g_t": b_conv,
    }
    return ReachCurve(f, frequency_to_mass(f), g, float(t_int), meta)


def log_slope(curve: ReachCurve, f_lo, f_hi) -> float:
    """Least-squares slope of log g versus log f over [f_lo, f_hi]."""
    sel = (curve.frequency >= f_lo) & (curve.frequency <= f_hi)
    if sel.sum() < 2:
        raise DomainError("fewer than two grid points in the slope window")
    return float(np.polyfit(np.log(curve.frequency[sel]), np.log(curve.g_limit[sel]), 1)[0])


def load_reference_bounds(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Read labelled bound curves from CSV (frequency_hz, g_limit, label).

    Returns ``{label: (frequency, g_limit)}`` in first-appearance order.
    """
    curves: dict[str, tuple[list, list]] = {}
    with open(path, newline="") as fh:
        text = fh.read()
    if not text.strip():
        return {}
    reader = csv.reader(text.splitlines())
    header = next(reader)
    if [h.strip() for h in header] != ["frequency_hz", "g_limit", "label"]:
        raise ConfigError(f"{path}: line 1: expected header frequency_hz,g_limit,label")
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ConfigError(f"{path}: line {lineno}: expected 3 columns, got {len(row)}")
        try:
            fr, gl = float(row[0]), float(row[1])
        except ValueError as exc:
            raise ConfigError(f"{path}: line {lineno}: {exc}") from None
        if not (fr > 0 and gl > 0):
            raise ConfigError(f"{path}: line {lineno}: frequency and limit must be > 0")
        fl, gls = curves.setdefault(row[2].strip(), ([], []))
        fl.append(fr)
        gls.append(gl)
    return {k: (np.array(a), np.array(b)) for k, (a, b) in curves.items()}
