"""Stochastic simulation of the alpha libration as a damped, driven oscillator.

    I theta'' + gamma theta' + kappa theta = tau_th(t) + tau_drive(t)

with ``gamma = I omega0 / Q`` and white thermal torque of one-sided PSD
``4 k_B T gamma``.  The linear system is advanced with its exact one-step
propagator and the exact one-step noise covariance (Van Loan), so there is
no step-size bias.  The coherent drive enters through its analytic
steady-state response; the simulated record is therefore the stationary
driven state, with the thermal part started from its equilibrium
distribution unless an explicit initial state is given.

Internally the homogeneous part is rotated into the complex eigenmode of the
propagator, which turns the 2-D recursion into a scalar complex AR(1) that
``scipy.signal.lfilter`` evaluates in compiled code.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg
from scipy import signal as sps

from . import rng
from .constants import K_B
from .errors import DomainError, StabilityError
from .field import CoilCalibration
from .signals import TimeSeries, lockin_demodulate

MIN_SAMPLES_PER_PERIOD = 20.0
CHUNK = 16 * rng.BLOCK
SETTLE_TAU = 12.0

# detector defaults: 1 flux quantum per radian, 5e-6 Phi0/sqrt(Hz) white flux noise
DEFAULT_DETECTOR_COUPLING = 1.0
DEFAULT_DETECTOR_PSD = (5e-6) ** 2

# stream labels inside one seed
_THERMAL, _DETECTOR, _INITIAL = 0, 1, 2


@dataclass(frozen=True)
class Drive:
    """Coherent field drive: peak amplitude B1 (T) at angle theta1 (rad) to the dipole."""

    amplitude: float
    theta1: float
    frequency: float
    phase: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    """Everything that defines one simulated record.

    Exactly one of ``B0`` (stiffness ``mu * B0``) or ``kappa`` must be set.
    ``initial_state`` is ``(theta, theta_dot)``; ``None`` draws it from the
    thermal distribution (or zero at T = 0).
    """

    magnet: object
    Q: float
    temperature: float
    sample_rate: float
    duration: float
    B0: float | None = None
    kappa: float | None = None
    drive: Drive | None = None
    detector_coupling: float = DEFAULT_DETECTOR_COUPLING
    detector_noise_psd: float = DEFAULT_DETECTOR_PSD
    initial_state: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if (self.B0 is None) == (self.kappa is None):
            raise DomainError("set exactly one of B0 or kappa")
        if self.B0 is not None and not self.B0 > 0:
            raise DomainError("B0 must be > 0")
        if self.kappa is not None and not self.kappa > 0:
            raise DomainError("kappa must be > 0")
        if not self.Q > 0.5:
            raise DomainError("Q must exceed 1/2 (underdamped)")
        if not self.temperature >= 0:
            raise DomainError("temperature must be >= 0")
        if not self.duration > 0:
            raise DomainError("duration must be > 0")
        if not self.sample_rate > 0:
            raise DomainError("sample_rate must be > 0")
        if self.detector_noise_psd < 0:
            raise DomainError("detector_noise_psd must be >= 0")

    @property
    def stiffness(self) -> float:
        return self.kappa if self.kappa is not None else self.magnet.moment * self.B0

    @property
    def inertia(self) -> float:
        return self.magnet.inertia

    @property
    def omega0(self) -> float:
        return float(np.sqrt(self.stiffness / self.inertia))

    @property
    def f0(self) -> float:
        return self.omega0 / (2.0 * np.pi)

    @property
    def damping(self) -> float:
        """gamma = I omega0 / Q (N m s)."""
        return self.inertia * self.omega0 / self.Q

    @property
    def linewidth(self) -> float:
        """Power-spectrum FWHM f0/Q (Hz)."""
        return self.f0 / self.Q

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass
class SimOutput:
    angle: TimeSeries
    detector: TimeSeries
    velocity: np.ndarray

    def __iter__(self):
        yield self.angle
        yield self.detector


# -- analytic response ------------------------------------------------------

def susceptibility(f, kappa, inertia, damping):
    """Angle per unit torque chi(f) = 1 / (kappa - I w^2 + i gamma w) (rad / N m)."""
    w = 2.0 * np.pi * np.asarray(f, float)
    return 1.0 / (kappa - inertia * w * w + 1j * damping * w)


def angle_psd(f, config: SimConfig):
    """One-sided thermal angle PSD S_tau |chi|^2 (rad^2/Hz)."""
    s_tau = 4.0 * K_B * config.temperature * config.damping
    return s_tau * np.abs(susceptibility(f, config.stiffness, config.inertia, config.damping)) ** 2


def drive_torque_amplitude(config: SimConfig) -> float:
    d = config.drive
    return 0.0 if d is None else config.magnet.moment * d.amplitude * np.sin(d.theta1)


def drive_response(config: SimConfig) -> complex:
    """Complex steady-state angle amplitude: theta_p(t) = Re(c exp(i(2 pi f t + phase)))."""
    d = config.drive
    if d is None:
        return 0j
    chi = susceptibility(d.frequency, config.stiffness, config.inertia, config.damping)
    return complex(drive_torque_amplitude(config) * chi)


# -- propagator -------------------------------------------------------------

def _propagator(config: SimConfig):
    """One-step transition matrix and noise covariance for (theta, theta_dot)."""
    dt = 1.0 / config.sample_rate
    I = config.inertia
    A = np.array([[0.0, 1.0], [-config.stiffness / I, -config.damping / I]])
    qc = np.array([[0.0, 0.0], [0.0, 2.0 * K_B * config.temperature * config.damping / I**2]])
    # Van Loan: expm([[-A, Qc], [0, A^T]] dt) = [[., G], [0, Phi^T]], Sigma = Phi G
    M = np.zeros((4, 4))
    M[:2, :2] = -A
    M[:2, 2:] = qc
    M[2:, 2:] = A.T
    E = linalg.expm(M * dt)
    phi = E[2:, 2:].T
    sigma = phi @ E[:2, 2:]
    sigma = 0.5 * (sigma + sigma.T)
    return A, phi, sigma


def _sqrtm_psd(S):
    w, v = np.linalg.eigh(S)
    return v * np.sqrt(np.clip(w, 0.0, None))


def check_stability(config: SimConfig) -> None:
    if config.sample_rate <= MIN_SAMPLES_PER_PERIOD * config.f0:
        raise StabilityError(
            f"sample_rate {config.sample_rate} Hz must exceed {MIN_SAMPLES_PER_PERIOD:g} x f0 "
            f"= {MIN_SAMPLES_PER_PERIOD * config.f0:.6g} Hz"
        )
    d = config.drive
    if d is not None and d.frequency >= config.sample_rate / 2.0:
        raise StabilityError("drive frequency is at or above Nyquist")


def simulate_alpha_mode(config: SimConfig, stream_index: tuple[int, ...] = ()) -> SimOutput:
    """Simulate the angle and detector output for ``config``.

    ``stream_index`` extends the random key beyond ``config.seed``, so sweeps
    can give each point its own independent, schedule-free stream.
    """
    check_stability(config)
    n = config.n_samples
    if n < 2:
        raise DomainError("duration * sample_rate must give at least 2 samples")
    fs = config.sample_rate
    A, phi, sigma = _propagator(config)
    L = _sqrtm_psd(sigma)

    # complex eigenmode of phi; x = 2 Re(v c)
    lam_all, vecs = np.linalg.eig(phi)
    k = int(np.argmax(lam_all.imag))
    lam = lam_all[k]
    v = vecs[:, k]
    winv = np.linalg.inv(vecs)[k]  # c = winv @ x

    # particular (drive) solution and the homogeneous initial state
    t = np.arange(n) / fs
    c_drive = drive_response(config)
    if config.drive is not None:
        wd = 2.0 * np.pi * config.drive.frequency
        arg = wd * t + config.drive.phase
        theta_p = (c_drive * np.exp(1j * arg)).real
        thetadot_p = (1j * wd * c_drive * np.exp(1j * arg)).real
    else:
        theta_p = np.zeros(n)
        thetadot_p = np.zeros(n)

    key = (*stream_index,)
    if config.initial_state is not None:
        x0 = np.asarray(config.initial_state, float) - np.array([theta_p[0], thetadot_p[0]])
    elif config.temperature > 0:
        s_inf = np.array([K_B * config.temperature / config.stiffness, K_B * config.temperature / config.inertia])
        x0 = np.sqrt(s_inf) * rng.standard_normal(config.seed, (*key, _INITIAL), (2,))
    else:
        x0 = np.zeros(2)

    theta = np.empty(n)
    thetadot = np.empty(n)
    c = complex(winv @ x0)
    theta[0], thetadot[0] = (2.0 * (v * c)).real
    noisy = config.temperature > 0
    pos = 1
    while pos < n:
        m = min(CHUNK, n - pos)
        if noisy:
            xi = rng.standard_normal(config.seed, (*key, _THERMAL), (m, 2), start=pos - 1)
            e = (xi @ L.T) @ winv
        else:
            e = np.zeros(m, complex)
        zi = np.array([lam * c])
        cc, _ = sps.lfilter([1.0], [1.0, -lam], e, zi=zi)
        x = 2.0 * np.outer(cc, v).real
        theta[pos:pos + m] = x[:, 0]
        thetadot[pos:pos + m] = x[:, 1]
        c = cc[-1]
        pos += m
    theta += theta_p
    thetadot += thetadot_p

    det = config.detector_coupling * theta
    if config.detector_noise_psd > 0:
        sd = np.sqrt(config.detector_noise_psd * fs / 2.0)
        det = det + sd * rng.standard_normal(config.seed, (*key, _DETECTOR), (n,))
    return SimOutput(TimeSeries(fs, theta), TimeSeries(fs, det), thetadot)


# -- resolution sweep -----------------------------------------------------------

def synth_resolution_dataset(config: SimConfig, current_grid, coil: CoilCalibration, f_drive,
                             noise_bandwidth=1.0 / 64.0, drive_phase=0.0, point_offset=0):
    """Simulated lock-in amplitude versus rms drive current.

    For each rms current ``I`` the coil applies a field of peak amplitude
    ``sqrt(2) * coupling * I`` at the coil angle.  The detector record is
    demodulated at ``f_drive`` with the reference aligned to the analytic
    response phase, the first ``SETTLE_TAU`` filter time constants are
    dropped, and the rms of the in-phase output is returned.  In expectation
    this equals ``sqrt((s I)^2 + n^2)`` with ``n^2`` the in-band noise power.

    Returns a list of ``(current, amplitude)`` tuples.
    """
    currents = [float(x) for x in current_grid]
    out = []
    for k, cur in enumerate(currents):
        drive = Drive(np.sqrt(2.0) * coil.coupling * abs(cur), coil.angle, f_drive, drive_phase)
        cfg = replace(config, drive=drive)
        sim = simulate_alpha_mode(cfg, stream_index=(point_offset + k,))
        resp = susceptibility(f_drive, cfg.stiffness, cfg.inertia, cfg.damping)
        ref = drive_phase + float(np.angle(resp))
        lo = lockin_demodulate(sim.detector, f_drive, noise_bandwidth, ref_phase=ref).settled(SETTLE_TAU)
        if lo.x.size < 2:
            raise DomainError("per-point duration is too short for the lock-in to settle")
        out.append((cur, float(np.sqrt(np.mean(lo.x**2)))))
    return out


def expected_slope(config: SimConfig, coil: CoilCalibration, f_drive) -> float:
    """Noise-free lock-in X per unit rms current (detector units per A)."""
    chi = susceptibility(f_drive, config.stiffness, config.inertia, config.damping)
    return config.detector_coupling * config.magnet.moment * coil.coupling * np.sin(coil.angle) * abs(chi)
