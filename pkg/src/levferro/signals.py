"""Measurement pipeline: lock-in, ringdown and Lorentzian fits, PSDs, SNR=1 crossing.

Lock-in convention
------------------
The reference is ``exp(-i 2 pi f_ref t)`` and the low-pass is a cascade of
``order`` identical single poles whose time constant is set so the
equivalent noise bandwidth (one-sided, ``int_0^inf |H|^2 df``) equals the
requested ``noise_bandwidth``.  With ``scale="rms"`` (default) the mixer gain
is sqrt(2): a tone of peak amplitude A reads R = A/sqrt(2), and white noise of
one-sided PSD S gives <X^2> = <Y^2> = S * noise_bandwidth.  ``scale="peak"``
uses gain 2 so the tone reads R = A.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass, field
from math import gamma, pi, sqrt
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.integrate import trapezoid

from .errors import AliasingError, ConvergenceError, DomainError, SingleRegimeError
from .field import CoilCalibration
from .fitting import levenberg_marquardt

BINARY_MAGIC = b"FLTS"
BINARY_VERSION = 1
LOCKIN_ORDER = 4
SAMPLES_PER_TAU = 8


# -- time series ------------------------------------------------------------

@dataclass(frozen=True)
class TimeSeries:
    sample_rate: float
    samples: np.ndarray = field(repr=False)
    start_time: float = 0.0

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise DomainError(f"sample_rate must be > 0, got {self.sample_rate!r}")
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1:
            raise DomainError("samples must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise DomainError("samples must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def t(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for ti, xi in zip(self.t, self.samples):
                w.writerow([repr(float(ti)), repr(float(xi))])

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t, x = data[:, 0], data[:, 1]
        if t.size < 2:
            raise DomainError("need at least two samples to infer the sample rate")
        dt = np.diff(t)
        if np.ptp(dt) > 1e-6 * abs(dt.mean()):
            raise DomainError("CSV time column is not uniformly sampled")
        return cls(1.0 / dt.mean(), x, float(t[0]))

    def to_binary(self, path) -> None:
        """16-byte header (magic, uint32 version, float64 rate) then float64 samples, little-endian."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sId", BINARY_MAGIC, BINARY_VERSION, self.sample_rate))
            fh.write(self.samples.astype("<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "TimeSeries":
        raw = Path(path).read_bytes()
        if len(raw) < 16:
            raise DomainError("file too short for a FLTS header")
        magic, version, rate = struct.unpack("<4sId", raw[:16])
        if magic != BINARY_MAGIC:
            raise DomainError(f"bad magic {magic!r}")
        if version != BINARY_VERSION:
            raise DomainError(f"unsupported FLTS version {version}")
        if (len(raw) - 16) % 8:
            raise DomainError("payload is not a whole number of float64 samples")
        return cls(rate, np.frombuffer(raw, dtype="<f8", offset=16).copy())


def load_timeseries(path) -> TimeSeries:
    """Read CSV or FLTS binary, chosen by the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == BINARY_MAGIC:
        return TimeSeries.from_binary(path)
    return TimeSeries.from_csv(path)


# -- lock-in ----------------------------------------------------------------

def cascade_enbw_factor(order: int) -> float:
    """ENBW * tau for ``order`` cascaded single poles: Gamma(n-1/2) sqrt(pi) / (2 Gamma(n)) / (2 pi)."""
    if order < 1:
        raise DomainError("filter order must be >= 1")
    return gamma(order - 0.5) * sqrt(pi) / (2.0 * gamma(order)) / (2.0 * pi)


def lockin_time_constant(noise_bandwidth, order=LOCKIN_ORDER) -> float:
    if not noise_bandwidth > 0:
        raise DomainError("noise_bandwidth must be > 0")
    return cascade_enbw_factor(order) / noise_bandwidth


def lockin_power_response(df, noise_bandwidth, order=LOCKIN_ORDER):
    """|H(df)|^2 of the continuous-time cascade at offset ``df`` from the reference."""
    tau = lockin_time_constant(noise_bandwidth, order)
    return (1.0 + (2.0 * pi * np.asarray(df) * tau) ** 2) ** (-order)


@dataclass
class LockinOutput:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    tau: float
    noise_bandwidth: float
    scale: str

    @property
    def amplitude(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    @property
    def phase(self) -> np.ndarray:
        return np.arctan2(self.y, self.x)

    def settled(self, n_tau: float = 12.0) -> "LockinOutput":
        """Drop the first ``n_tau`` filter time constants."""
        keep = self.t - self.t[0] >= n_tau * self.tau
        return LockinOutput(self.t[keep], self.x[keep], self.y[keep], self.tau, self.noise_bandwidth, self.scale)


def lockin_demodulate(ts: TimeSeries, f_ref, noise_bandwidth, order=LOCKIN_ORDER,
                      ref_phase=0.0, scale="rms", decimate=True) -> LockinOutput:
    """Dual-phase demodulation at ``f_ref`` with an ENBW-matched low-pass.

    Parameters
    ----------
    ts : TimeSeries
    f_ref : float
        Reference frequency (Hz); must be below Nyquist.
    noise_bandwidth : float
        Equivalent noise bandwidth of the output filter (Hz).
    ref_phase : float
        Reference phase offset (rad); X is in phase with ``cos(2 pi f t + ref_phase)``.
    scale : {"rms", "peak"}
    decimate : bool
        Keep ``SAMPLES_PER_TAU`` outputs per time constant instead of every sample.
    """
    fs = ts.sample_rate
    if f_ref >= fs / 2.0:
        raise AliasingError(f"f_ref={f_ref} Hz is at or above Nyquist ({fs / 2} Hz)")
    if not f_ref > 0:
        raise DomainError("f_ref must be > 0")
    if noise_bandwidth >= f_ref:
        raise DomainError("noise_bandwidth must be much smaller than f_ref")
    gain = {"rms": sqrt(2.0), "peak": 2.0}.get(scale)
    if gain is None:
        raise DomainError(f"scale must be 'rms' or 'peak', got {scale!r}")

    tau = lockin_time_constant(noise_bandwidth, order)
    t = ts.t
    z = gain * ts.samples * np.exp(-1j * (2.0 * pi * f_ref * t + ref_phase))
    # exact discretization of a single pole, applied ``order`` times
    pole = np.exp(-1.0 / (fs * tau))
    b, a = [1.0 - pole], [1.0, -pole]
    for _ in range(order):
        z = sps.lfilter(b, a, z)
    step = max(1, int(fs * tau / SAMPLES_PER_TAU)) if decimate else 1
    sl = slice(step - 1, None, step)
    return LockinOutput(t[sl], z.real[sl].copy(), z.imag[sl].copy(), tau, noise_bandwidth, scale)


# -- ringdown -----------------------------------------------------------------

def q_from_ringdown(f, tau):
    """Q = pi f tau for an amplitude decay time ``tau``."""
    if not (f > 0 and tau > 0):
        raise DomainError("f and tau must be > 0")
    return pi * f * tau


@dataclass
class RingdownFit:
    tau: float
    initial_amplitude: float
    offset: float
    sigma_tau: float
    Q: float = float("nan")
    sigma_Q: float = float("nan")
    reduced_chi2: float = float("nan")
    covariance: np.ndarray = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "tau_s": self.tau,
            "sigma_tau_s": self.sigma_tau,
            "initial_amplitude": self.initial_amplitude,
            "offset": self.offset,
            "Q": self.Q,
            "sigma_Q": self.sigma_Q,
            "reduced_chi2": self.reduced_chi2,
            "parameter_order": ["A0", "tau", "offset"],
            "covariance": None if self.covariance is None else self.covariance.tolist(),
        }


def fit_ringdown(t, amplitude, sigma=None, frequency=None, fit_offset=True) -> RingdownFit:
    """Fit ``A0 exp(-(t - t0)/tau) + offset`` to a decaying amplitude record.

    Without ``sigma`` the covariance is scaled by the reduced chi-square.
    ``frequency`` (Hz), when given, converts tau to Q.
    """
    t = np.asarray(t, float)
    y = np.asarray(amplitude, float)
    if t.shape != y.shape or t.size < 4:
        raise DomainError("need matching t and amplitude arrays with at least 4 points")
    t0 = t[0]
    tt = t - t0
    scale = np.max(np.abs(y))
    if scale == 0:
        raise DomainError("amplitude record is identically zero")
    yn = y / scale
    w = np.ones_like(yn) if sigma is None else scale / np.broadcast_to(np.asarray(sigma, float), y.shape)

    # log-linear start on the positive part
    pos = yn > 0
    if pos.sum() < 2:
        raise DomainError("amplitudes must be positive after background subtraction")
    slope, icpt = np.polyfit(tt[pos], np.log(yn[pos]), 1)
    tau0 = -1.0 / slope if slope < 0 else tt[-1] * 10.0

    if fit_offset:
        def resid(p):
            return (yn - (p[0] * np.exp(-tt / p[1]) + p[2])) * w
        p0 = [np.exp(icpt), tau0, 0.0]
        names = ("A0", "tau", "offset")
    else:
        def resid(p):
            return (yn - p[0] * np.exp(-tt / p[1])) * w
        p0 = [np.exp(icpt), tau0]
        names = ("A0", "tau")
    fit = levenberg_marquardt(resid, p0, names=names)
    vals = fit.values
    if not vals[1] > 0:
        raise ConvergenceError("ringdown fit returned a non-positive decay time")
    cov = fit.covariance.copy()
    if sigma is None and fit.dof > 0:
        cov *= fit.reduced_chi2
    scl = np.array([scale, 1.0, scale][: vals.size])
    cov = cov * np.outer(scl, scl)
    if not fit_offset:
        full = np.zeros((3, 3))
        full[:2, :2] = cov
        cov = full
    tau = float(vals[1])
    sig_tau = float(np.sqrt(cov[1, 1]))
    if tt[-1] < 0.5 * tau:
        warnings.warn(
            f"record spans {tt[-1]:.3g} s, less than half the fitted decay time {tau:.3g} s",
            RuntimeWarning, stacklevel=2,
        )
    out = RingdownFit(
        tau=tau,
        initial_amplitude=float(vals[0] * scale),
        offset=float(vals[2] * scale) if fit_offset else 0.0,
        sigma_tau=sig_tau,
        reduced_chi2=fit.reduced_chi2,
        covariance=cov,
    )
    if frequency is not None:
        out.Q = q_from_ringdown(frequency, tau)
        out.sigma_Q = pi * frequency * sig_tau
    return out


# -- Lorentzian -----------------------------------------------------------------

@dataclass
class LorentzianFit:
    f0: float
    linewidth: float
    amplitude: float
    background: float
    sigmas: dict[str, float]
    reduced_chi2: float
    covariance: np.ndarray = field(repr=False)

    @property
    def Q(self) -> float:
        return self.f0 / self.linewidth

    def as_dict(self) -> dict:
        return {
            "f0_hz": self.f0,
            "linewidth_hz": self.linewidth,
            "amplitude": self.amplitude,
            "background": self.background,
            "Q": self.Q,
            "sigmas": self.sigmas,
            "reduced_chi2": self.reduced_chi2,
            "parameter_order": ["f0", "linewidth", "amplitude", "background"],
            "covariance": self.covariance.tolist(),
        }


def lorentzian(f, f0, linewidth, amplitude, background=0.0):
    """A / ((f - f0)^2 + (linewidth/2)^2) + background, linewidth = FWHM."""
    return amplitude / ((f - f0) ** 2 + (0.5 * linewidth) ** 2) + background


def fit_lorentzian(f, S, n_averages=None, max_reweight=10) -> LorentzianFit:
    """Fit a power-spectrum peak with a Lorentzian plus flat background.

    Parameters
    ----------
    f, S : array_like
        Frequencies (Hz) and one-sided PSD values.
    n_averages : int, optional
        Number of averaged periodograms behind ``S``.  When given, each bin is
        weighted by ``model / sqrt(n_averages)`` (iteratively reweighted);
        otherwise the fit is unweighted and the covariance is scaled by the
        reduced chi-square.
    """
    f = np.asarray(f, float)
    S = np.asarray(S, float)
    if f.shape != S.shape or f.size < 5:
        raise DomainError("need matching f and S arrays with at least 5 points")
    k = int(np.argmax(S))
    if k < 2 or k > f.size - 3:
        raise DomainError("spectral peak lies at the edge of the supplied range")
    scale = S[k]
    y = S / scale
    bg0 = float(np.median(np.r_[y[: max(1, f.size // 10)], y[-max(1, f.size // 10):]]))
    half = bg0 + 0.5 * (1.0 - bg0)
    lo = k
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = k
    while hi < f.size - 1 and y[hi] > half:
        hi += 1
    width0 = max(f[hi] - f[lo], 2.0 * np.median(np.diff(f)))
    span = f[-1] - f[0]
    if span < 5.0 * width0:
        warnings.warn("spectrum covers fewer than 5 linewidths around the peak", RuntimeWarning, stacklevel=2)
    fc = f[k]
    p0 = np.array([0.0, width0, (1.0 - bg0) * (0.5 * width0) ** 2, bg0])
    x = f - fc

    def model(p):
        return p[2] / ((x - p[0]) ** 2 + (0.5 * p[1]) ** 2) + p[3]

    w = np.ones_like(y)
    names = ("f0", "linewidth", "amplitude", "background")
    fit = None
    for _ in range(max_reweight if n_averages else 1):
        fit = levenberg_marquardt(lambda p: (y - model(p)) * w, p0, names=names)
        if not n_averages:
            break
        w_new = np.sqrt(n_averages) / np.maximum(model(fit.values), 1e-300)
        if np.max(np.abs(fit.values - p0) / np.maximum(np.abs(p0), 1e-12)) < 1e-8:
            w = w_new
            break
        p0, w = fit.values, w_new
    if n_averages:
        fit = levenberg_marquardt(lambda p: (y - model(p)) * w, fit.values, names=names)
    vals = fit.values.copy()
    vals[1] = abs(vals[1])
    cov = fit.covariance.copy()
    if not n_averages and fit.dof > 0:
        cov *= fit.reduced_chi2
    scl = np.array([1.0, 1.0, scale, scale])
    cov = cov * np.outer(scl, scl)
    f0 = fc + vals[0]
    if not (f[0] < f0 < f[-1]):
        raise DomainError("fitted peak lies outside the supplied frequency range")
    if not vals[1] > 0:
        raise ConvergenceError("Lorentzian fit returned a zero linewidth")
    sig = np.sqrt(np.clip(np.diag(cov), 0, np.inf))
    return LorentzianFit(
        f0=float(f0),
        linewidth=float(vals[1]),
        amplitude=float(vals[2] * scale),
        background=float(vals[3] * scale),
        sigmas=dict(zip(names, map(float, sig))),
        reduced_chi2=fit.reduced_chi2,
        covariance=cov,
    )


# -- Welch PSD ----------------------------------------------------------------

WINDOWS = ("hann", "hamming", "blackmanharris", "boxcar", "flattop")


@dataclass
class PSDEstimate:
    f: np.ndarray
    S: np.ndarray
    n_averages: int
    window: str

    def as_dict(self) -> dict:
        return {"n_averages": self.n_averages, "window": self.window, "f_hz": self.f.tolist(), "S": self.S.tolist()}


def welch_psd(ts: TimeSeries, segment_length: int, overlap: float = 0.5, window: str = "hann") -> PSDEstimate:
    """One-sided Welch PSD (density scaling, no detrending).

    ``overlap`` is the fraction of a segment shared with its neighbour.
    """
    n = len(ts)
    segment_length = int(segment_length)
    if segment_length > n:
        raise DomainError(f"segment_length {segment_length} exceeds record length {n}")
    if segment_length < 2:
        raise DomainError("segment_length must be >= 2")
    if not 0.0 <= overlap < 1.0:
        raise DomainError("overlap must lie in [0, 1)")
    if window not in WINDOWS:
        raise DomainError(f"window must be one of {WINDOWS}")
    noverlap = int(round(overlap * segment_length))
    f, S = sps.welch(ts.samples, fs=ts.sample_rate, window=window, nperseg=segment_length,
                     noverlap=noverlap, detrend=False, scaling="density", return_onesided=True)
    n_avg = 1 + (n - segment_length) // (segment_length - noverlap)
    return PSDEstimate(f, S, int(n_avg), window)


# -- SNR = 1 crossing -----------------------------------------------------------

@dataclass
class CrossingFit:
    response_slope: float
    noise_floor: float
    I_snr1: float
    sigma_I: float
    sigma_slope: float = float("nan")
    sigma_floor: float = float("nan")
    rms_log_residual: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "response_slope_per_a": self.response_slope,
            "noise_floor": self.noise_floor,
            "I_snr1_a": self.I_snr1,
            "sigma_I_a": self.sigma_I,
            "sigma_slope": self.sigma_slope,
            "sigma_floor": self.sigma_floor,
            "rms_log_residual": self.rms_log_residual,
        }


def two_regime(current, slope, floor):
    return np.sqrt((slope * np.asarray(current)) ** 2 + floor**2)


def extract_snr1_crossing(current, amplitude) -> CrossingFit:
    """Fit ``sqrt((s I)^2 + n^2)`` to amplitude versus current in log space.

    Returns the slope ``s``, floor ``n`` and the SNR = 1 current ``n/s``.
    Raises SingleRegimeError unless the data bracket the knee.
    """
    I = np.abs(np.asarray(current, float))
    A = np.asarray(amplitude, float)
    if I.shape != A.shape or I.size < 3:
        raise DomainError("need matching current and amplitude arrays with at least 3 points")
    if np.any(A <= 0):
        raise DomainError("amplitudes must be positive")
    if A.max() / A.min() <= 3.0:
        raise SingleRegimeError("amplitude range is below 3: data do not span both regimes")
    scale = np.exp(np.mean(np.log(A)))
    iscale = np.max(I)
    la = np.log(A / scale)
    x = I / iscale
    order = np.argsort(x)
    n0 = np.exp(np.mean(la[order[: max(1, I.size // 4)]]))
    top = order[-max(1, I.size // 4):]
    s0 = np.exp(np.mean(la[top] - np.log(np.maximum(x[top], 1e-300))))

    def resid(p):
        return la - 0.5 * np.log((np.exp(p[0]) * x) ** 2 + np.exp(2.0 * p[1]))

    fit = levenberg_marquardt(resid, [np.log(s0), np.log(n0)], names=("log_s", "log_n"))
    ls, ln = fit.values
    cov = fit.covariance * (fit.reduced_chi2 if fit.dof > 0 else 1.0)
    s = np.exp(ls) * scale / iscale
    nfl = np.exp(ln) * scale
    knee = nfl / s
    lowest = I[I > 0].min() if np.any(I > 0) else 0.0
    if not lowest < knee < I.max():
        raise SingleRegimeError(f"fitted knee {knee:.3g} A lies outside the sampled currents")
    var_log_knee = cov[0, 0] + cov[1, 1] - 2.0 * cov[0, 1]
    return CrossingFit(
        response_slope=float(s),
        noise_floor=float(nfl),
        I_snr1=float(knee),
        sigma_I=float(knee * np.sqrt(max(var_log_knee, 0.0))),
        sigma_slope=float(s * np.sqrt(cov[0, 0])),
        sigma_floor=float(nfl * np.sqrt(cov[1, 1])),
        rms_log_residual=float(np.sqrt(fit.chi2 / I.size)),
    )


@dataclass
class FieldResolution:
    S_B: float
    sigma_S_B: float
    B_n: float

    @property
    def sqrt_S_B(self) -> float:
        return float(np.sqrt(self.S_B))

    def as_dict(self) -> dict:
        return {"S_B_t2_per_hz": self.S_B, "sigma_S_B": self.sigma_S_B,
                "sqrt_S_B_t_per_rthz": self.sqrt_S_B, "B_n_t": self.B_n}


def field_resolution_from_crossing(cross: CrossingFit, coil: CoilCalibration, noise_bandwidth) -> FieldResolution:
    """S_B = (lambda I_snr1 sin(theta))^2 / noise_bandwidth with propagated uncertainty.

    ``I_snr1`` is taken as an rms current so that ``B_n`` is the rms field
    noise in the band.
    """
    if not noise_bandwidth > 0:
        raise DomainError("noise_bandwidth must be > 0")
    st = np.sin(coil.angle)
    b_n = coil.coupling * cross.I_snr1 * st
    s_b = b_n**2 / noise_bandwidth
    rel = np.sqrt(
        (cross.sigma_I / cross.I_snr1) ** 2
        + (coil.sigma_coupling / coil.coupling) ** 2
        + (coil.sigma_angle * np.cos(coil.angle) / st) ** 2
    )
    return FieldResolution(S_B=float(s_b), sigma_S_B=float(2.0 * rel * s_b), B_n=float(b_n))


def resonant_capture_factor(f0, Q, noise_bandwidth, order=LOCKIN_ORDER, n_grid=200_001) -> float:
    """Fraction of white-noise lock-in power captured when the input is a resonance.

    Ratio of ``int |H(nu)|^2 L(nu) dnu`` to ``2 * noise_bandwidth``, where
    ``L`` is the oscillator power response normalised to 1 at ``f0`` and the
    lock-in sits at ``f0``.  Equals 1 when the mode is much broader than the
    filter and falls towards ``pi f0 / (4 Q noise_bandwidth)`` when it is much
    narrower.
    """
    width = f0 / Q
    half = 200.0 * max(width, noise_bandwidth)
    nu = np.linspace(-min(half, 0.999 * f0), min(half, 0.999 * f0), n_grid)
    f = f0 + nu
    w, w0 = 2 * pi * f, 2 * pi * f0
    L = (w0 * w0 / Q) ** 2 / ((w0**2 - w**2) ** 2 + (w0 * w / Q) ** 2)
    h = lockin_power_response(nu, noise_bandwidth, order)
    return float(trapezoid(h * L, nu) / (2.0 * noise_bandwidth))
