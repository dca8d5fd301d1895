"""alpha-mode frequency versus coil current, and coil calibration fits.

The horizontal field at the magnet is the vector sum of the trapped field
``B0`` and the coil field ``lambda * I`` at angle ``theta`` to ``B0``; the
alpha mode then librates at ``sqrt(mu * |B| / I_inertia) / 2 pi``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFitError, DomainError
from .fitting import FitResult, levenberg_marquardt
from .trap import MagnetParams, alpha_frequency

DEFAULT_SIGMA_HZ = 1e-3
THETA_GRID_DEG = (15.0, 45.0, 75.0)
# internal fit units, for conditioning only
_UT = 1e-6


@dataclass(frozen=True)
class CoilCalibration:
    """Coupling factor (T/A) and angle to the trapped field (rad) of one coil."""

    coupling: float
    angle: float
    sigma_coupling: float = 0.0
    sigma_angle: float = 0.0

    def __post_init__(self):
        if not self.coupling > 0:
            raise DomainError(f"coupling must be > 0, got {self.coupling!r}")
        if not 0.0 <= self.angle <= np.pi:
            raise DomainError(f"angle must lie in [0, pi], got {self.angle!r}")


def total_field_magnitude(b0, coil: CoilCalibration, current):
    """|B0 + B_coil| for coil current(s) ``current`` (A, sign gives direction)."""
    b1 = coil.coupling * np.asarray(current, float)
    sq = b0**2 + b1**2 + 2.0 * b0 * b1 * np.cos(coil.angle)
    out = np.sqrt(np.maximum(sq, 0.0))
    return float(out) if out.ndim == 0 else out


def alpha_freq_vs_current(magnet: MagnetParams, b0, coil: CoilCalibration, current):
    return alpha_frequency(magnet.moment, total_field_magnitude(b0, coil, current), magnet.inertia)


def vertex_current(b0, coil: CoilCalibration):
    """Current at which |B| (and f_alpha) is smallest: -B0 cos(theta) / lambda."""
    return -b0 * np.cos(coil.angle) / coil.coupling


def torque_from_field(moment, field, angle):
    """Torque mu * B1 * sin(theta1) (N m) from a field at ``angle`` to the dipole."""
    return moment * field * np.sin(angle)


@dataclass
class CoilFit:
    b0: float
    coils: dict[int, CoilCalibration]
    fit: FitResult
    fit_quantity: str

    @property
    def covariance(self) -> np.ndarray:
        return self.fit.covariance

    @property
    def reduced_chi2(self) -> float:
        return self.fit.reduced_chi2

    @property
    def degenerate(self) -> bool:
        return self.fit.degenerate

    @property
    def inter_coil_angle(self) -> tuple[float, float]:
        """Two candidate angles between the coil fields (same or opposite side of B0)."""
        t1, t2 = self.coils[1].angle, self.coils[2].angle
        alt = t1 + t2
        return abs(t1 - t2), min(alt, 2.0 * np.pi - alt)

    def as_dict(self) -> dict:
        out = {
            "B0_t": self.b0,
            "sigma_B0_t": self.fit.sigma("B0"),
            "fit_quantity": self.fit_quantity,
            "parameter_order": list(self.fit.names),
            "parameter_units": ["T", "rad", "T/A", "rad", "T/A"],
            "covariance": self.covariance.tolist(),
            "reduced_chi2": self.reduced_chi2,
            "degenerate": self.degenerate,
            "inter_coil_angle_rad": list(self.inter_coil_angle),
        }
        for k, c in self.coils.items():
            out[f"coil{k}"] = {
                "coupling_t_per_a": c.coupling,
                "sigma_coupling_t_per_a": c.sigma_coupling,
                "angle_rad": c.angle,
                "sigma_angle_rad": c.sigma_angle,
                "angle_deg": np.degrees(c.angle),
            }
        return out


def _model(p, coil_id, current, moment, inertia):
    b0, t1, l1, t2, l2 = p
    theta = np.where(coil_id == 1, t1, t2)
    lam = np.where(coil_id == 1, l1, l2)
    b1 = lam * current
    sq = b0**2 + b1**2 + 2.0 * b0 * b1 * np.cos(theta)
    field = np.sqrt(np.maximum(sq, 0.0)) * _UT
    return np.sqrt(moment * field / inertia) / (2.0 * np.pi)


def _canonical(p):
    """Fold (B0, theta_i, lambda_i) into B0 >= 0, lambda_i > 0, theta_i in [0, pi].

    Returns the folded vector and the sign of d(folded)/d(raw) per entry.
    """
    p = np.array(p, float)
    sign = np.ones(5)
    if p[0] < 0:
        p[0] = -p[0]
        sign[0] = -1
        for t in (1, 3):
            p[t] = np.pi - p[t]
            sign[t] *= -1
    for t, lam in ((1, 2), (3, 4)):
        if p[lam] < 0:
            p[lam] = -p[lam]
            sign[lam] *= -1
            p[t] = np.pi - p[t]
            sign[t] *= -1
        th = np.mod(p[t], 2.0 * np.pi)
        if th > np.pi:
            th = 2.0 * np.pi - th
            sign[t] *= -1
        p[t] = th
    return p, sign


def fit_coil_calibration(coil_id, current, f_alpha, magnet: MagnetParams, sigma=None, fit_quantity="f"):
    """Joint weighted fit of B0, (theta1, lambda1), (theta2, lambda2).

    Parameters
    ----------
    coil_id, current, f_alpha : array_like
        One row per measurement; ``coil_id`` is 1 or 2, current in A, f in Hz.
    magnet : MagnetParams
        Supplies the fixed dipole moment and moment of inertia.
    sigma : array_like, optional
        Frequency uncertainties (Hz); 1 mHz when omitted.
    fit_quantity : {"f", "f2"}
        Fit the frequencies themselves or their squares.
    """
    cid = np.asarray(coil_id, int)
    cur = np.asarray(current, float)
    f = np.asarray(f_alpha, float)
    s = np.full(f.shape, DEFAULT_SIGMA_HZ) if sigma is None else np.asarray(sigma, float)
    if not (cid.shape == cur.shape == f.shape == s.shape):
        raise DomainError("coil_id, current, f_alpha and sigma must have the same length")
    if f.size < 5:
        raise DegenerateFitError("need at least 5 points")
    if fit_quantity not in ("f", "f2"):
        raise DomainError(f"fit_quantity must be 'f' or 'f2', got {fit_quantity!r}")
    for k in (1, 2):
        sel = cid == k
        if not sel.any():
            raise DegenerateFitError(f"no data for coil {k}")
        if np.unique(cur[sel]).size < 2:
            raise DegenerateFitError(f"all currents for coil {k} are equal")
    if np.any(~np.isin(cid, (1, 2))):
        raise DomainError("coil_id must be 1 or 2")

    mu, inertia = magnet.moment, magnet.inertia

    def resid(p):
        m = _model(p, cid, cur, mu, inertia)
        if fit_quantity == "f":
            return (f - m) / s
        return (f**2 - m**2) / (2.0 * f * s)

    field = (2.0 * np.pi * f) ** 2 * inertia / mu / _UT
    b0_guess = field[np.argmin(np.abs(cur))]
    lam_guess = {}
    for k in (1, 2):
        sel = cid == k
        big = np.abs(cur[sel]) >= np.quantile(np.abs(cur[sel]), 0.5)
        x, y = np.abs(cur[sel][big]), field[sel][big]
        if np.ptp(x) > 0:
            slope = np.polyfit(x, y, 1)[0]
        else:
            slope = y.mean() / x.mean()
        lam_guess[k] = abs(slope) if slope != 0 else 1.0

    grid = np.radians(THETA_GRID_DEG + tuple(180.0 - t for t in THETA_GRID_DEG))
    starts = []
    for t1, t2 in itertools.product(grid, grid):
        p = np.array([b0_guess, t1, lam_guess[1], t2, lam_guess[2]])
        r = resid(p)
        starts.append((float(r @ r), p))
    starts.sort(key=lambda x: x[0])

    best = None
    for _, p0 in starts[:3]:
        fit = levenberg_marquardt(resid, p0, names=("B0", "theta1", "lambda1", "theta2", "lambda2"))
        if best is None or fit.chi2 < best.chi2:
            best = fit

    folded, sign = _canonical(best.values)
    units = np.array([_UT, 1.0, _UT, 1.0, _UT])
    d = sign * units
    with np.errstate(invalid="ignore"):
        cov = best.covariance * np.outer(d, d)
    values = folded * units
    final = FitResult(best.names, values, cov, best.chi2, best.dof, best.n_iter, best.condition, best.jacobian)
    sig = final.sigmas
    coils = {
        1: CoilCalibration(values[2], values[1], sig[2], sig[1]),
        2: CoilCalibration(values[4], values[3], sig[4], sig[3]),
    }
    return CoilFit(b0=float(values[0]), coils=coils, fit=final, fit_quantity=fit_quantity)
