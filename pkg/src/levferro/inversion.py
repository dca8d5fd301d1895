"""In-situ estimation of magnet radius and magnetization from mode frequencies."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize

from . import rng
from .constants import MU_0
from .errors import ConvergenceError, DegenerateFitError, DomainError, MonteCarloFailureError, NoSolutionError
from .fitting import levenberg_marquardt
from .trap import forward_frequencies

log = logging.getLogger(__name__)

R_BOX = (0.5e-6, 500e-6)
M_BOX = (1e4, 2e6)
NEWTON_MAX_ITER = 60
NEWTON_TOL = 1e-13
MC_CHUNK = 4096
MAX_FAILED_FRACTION = 0.01

INPUT_NAMES = ("f_z", "f_beta", "density", "trap_radius", "g")


@dataclass(frozen=True)
class MeasuredInput:
    value: float
    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma!r}")


@dataclass(frozen=True)
class InversionResult:
    R: float
    M: float
    sigma_R: float
    sigma_M: float
    correlation_RM: float
    method: str = "linear"
    n_samples: int = 0
    failed_fraction: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def _initial_guess(fz, fb, rho, a, g):
    # flat-plane image model: f_z^2 = 4 g/z / (2 pi)^2, f_b^2 = (5/3) g z / R^2 / (2 pi)^2
    z = 4.0 * g / (2.0 * np.pi * fz) ** 2
    R = np.sqrt(5.0 * g * z / 3.0) / (2.0 * np.pi * fb)
    V = 4.0 * np.pi * R**3 / 3.0
    M = np.sqrt(64.0 * np.pi * rho * g * z**4 / (3.0 * MU_0 * V))
    R = np.clip(R, *R_BOX)
    M = np.clip(M, *M_BOX)
    return np.log(R), np.log(M)


def _residual(lr, lm, fz, fb, rho, a, g):
    mz, mb = forward_frequencies(np.exp(lr), np.exp(lm), rho, a, g)
    return np.log(mz) - np.log(fz), np.log(mb) - np.log(fb)


def _newton_batch(fz, fb, rho, a, g):
    """Newton iteration in (log R, log M); NaN rows where it fails or leaves the box."""
    fz, fb, rho, a, g = np.broadcast_arrays(*(np.atleast_1d(np.asarray(x, float)) for x in (fz, fb, rho, a, g)))
    lr, lm = _initial_guess(fz, fb, rho, a, g)
    lo_r, hi_r = np.log(R_BOX)
    lo_m, hi_m = np.log(M_BOX)
    h = 1e-7
    active = np.ones(fz.shape, bool)
    failed = np.zeros(fz.shape, bool)
    r1, r2 = _residual(lr, lm, fz, fb, rho, a, g)
    failed |= ~(np.isfinite(r1) & np.isfinite(r2))
    for _ in range(NEWTON_MAX_ITER):
        done = (np.abs(r1) < NEWTON_TOL) & (np.abs(r2) < NEWTON_TOL)
        active = ~done & ~failed
        if not active.any():
            break
        idx = np.flatnonzero(active)
        args = (fz[idx], fb[idx], rho[idx], a[idx], g[idx])
        x, y = lr[idx], lm[idx]
        e1, e2 = r1[idx], r2[idx]
        a1, a2 = _residual(x + h, y, *args)
        b1, b2 = _residual(x, y + h, *args)
        j11, j21 = (a1 - e1) / h, (a2 - e2) / h
        j12, j22 = (b1 - e1) / h, (b2 - e2) / h
        det = j11 * j22 - j12 * j21
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = -(j22 * e1 - j12 * e2) / det
            dy = -(-j21 * e1 + j11 * e2) / det
        # cap the step so one iteration never moves by more than a factor e
        scale = np.maximum(1.0, np.maximum(np.abs(dx), np.abs(dy)))
        dx, dy = dx / scale, dy / scale
        t = np.ones_like(dx)
        n1, n2 = np.full_like(dx, np.nan), np.full_like(dx, np.nan)
        pending = np.isfinite(dx) & np.isfinite(dy)
        old = np.maximum(np.abs(e1), np.abs(e2))
        for _ in range(30):
            if not pending.any():
                break
            k = np.flatnonzero(pending)
            c1, c2 = _residual(x[k] + t[k] * dx[k], y[k] + t[k] * dy[k], *(q[k] for q in args))
            good = np.isfinite(c1) & np.isfinite(c2) & (np.maximum(np.abs(c1), np.abs(c2)) < old[k])
            n1[k[good]], n2[k[good]] = c1[good], c2[good]
            pending[k[good]] = False
            t[k[~good]] *= 0.5
        ok = np.isfinite(n1)
        nx = np.where(ok, x + t * dx, x)
        ny = np.where(ok, y + t * dy, y)
        lr[idx], lm[idx] = nx, ny
        r1[idx], r2[idx] = np.where(ok, n1, e1), np.where(ok, n2, e2)
        stuck = ~ok & (old >= NEWTON_TOL)
        out_of_box = (nx < lo_r) | (nx > hi_r) | (ny < lo_m) | (ny > hi_m)
        failed[idx[stuck | out_of_box]] = True
    converged = (np.abs(r1) < NEWTON_TOL) & (np.abs(r2) < NEWTON_TOL) & ~failed
    R = np.where(converged, np.exp(lr), np.nan)
    M = np.where(converged, np.exp(lm), np.nan)
    return R, M


def _nested_bisection(fz, fb, rho, a, g):
    """Fallback: for each R solve f_z(R, M) = f_z for M, then match f_beta in R."""
    lm_lo, lm_hi = np.log(M_BOX)

    def m_for(lr):
        R = np.exp(lr)
        grid = np.linspace(lm_lo, lm_hi, 65)
        mz, _ = forward_frequencies(R, np.exp(grid), rho, a, g)
        d = np.log(mz) - np.log(fz)
        ok = np.isfinite(d)
        sgn = np.flatnonzero(ok[:-1] & ok[1:] & (np.sign(d[:-1]) != np.sign(d[1:])))
        if sgn.size == 0:
            return np.nan
        k = sgn[0]
        fun = lambda lm: np.log(forward_frequencies(R, np.exp(lm), rho, a, g)[0]) - np.log(fz)
        return optimize.brentq(fun, grid[k], grid[k + 1], xtol=1e-15, rtol=1e-15)

    def beta_mismatch(lr):
        lm = m_for(lr)
        if not np.isfinite(lm):
            return np.nan
        _, mb = forward_frequencies(np.exp(lr), np.exp(lm), rho, a, g)
        return float(np.log(mb) - np.log(fb))

    grid = np.linspace(*np.log(R_BOX), 65)
    vals = np.array([beta_mismatch(x) for x in grid])
    ok = np.isfinite(vals)
    sgn = np.flatnonzero(ok[:-1] & ok[1:] & (np.sign(vals[:-1]) != np.sign(vals[1:])))
    if sgn.size == 0:
        raise NoSolutionError(
            f"no (R, M) in R in {R_BOX} m, M in {M_BOX} A/m reproduces f_z={fz}, f_beta={fb}"
        )
    k = sgn[0]
    lr = optimize.brentq(beta_mismatch, grid[k], grid[k + 1], xtol=1e-15, rtol=1e-15)
    return float(np.exp(lr)), float(np.exp(m_for(lr)))


def invert_magnet_params(f_z, f_beta, density, trap_radius, g):
    """Radius (m) and magnetization (A/m) reproducing the z and beta mode frequencies.

    Raises
    ------
    NoSolutionError
        If no root exists inside R in [0.5, 500] um, M in [1e4, 2e6] A/m.
    """
    for name, v in zip(INPUT_NAMES, (f_z, f_beta, density, trap_radius, g)):
        if not v > 0:
            raise DomainError(f"{name} must be > 0, got {v!r}")
    R, M = _newton_batch(f_z, f_beta, density, trap_radius, g)
    if np.isfinite(R[0]):
        return float(R[0]), float(M[0])
    log.debug("Newton left the search box; falling back to nested bisection")
    R, M = _nested_bisection(f_z, f_beta, density, trap_radius, g)
    mz, mb = forward_frequencies(R, M, density, trap_radius, g)
    if abs(mz / f_z - 1) > 1e-9 or abs(mb / f_beta - 1) > 1e-9:
        raise ConvergenceError("nested bisection did not reach the frequency tolerance")
    return R, M


def _summary(R, M, R0, M0, method, n, failed):
    sR = float(np.std(R, ddof=1))
    sM = float(np.std(M, ddof=1))
    corr = float(np.corrcoef(R, M)[0, 1]) if sR > 0 and sM > 0 else 0.0
    return InversionResult(R0, M0, sR, sM, corr, method, n, failed)


def propagate_uncertainty(inputs: dict[str, MeasuredInput], method="linear", n_samples=100_000, seed=0):
    """Uncertainty of (R, M) from independent input uncertainties.

    ``inputs`` maps each of ``f_z, f_beta, density, trap_radius, g`` to a
    :class:`MeasuredInput`.  ``method="linear"`` uses a central-difference
    Jacobian with steps of sigma/10; ``method="monte_carlo"`` inverts
    ``n_samples`` independent normal draws.
    """
    missing = set(INPUT_NAMES) - set(inputs)
    if missing:
        raise DomainError(f"missing inputs: {sorted(missing)}")
    values = np.array([inputs[k].value for k in INPUT_NAMES], float)
    sigmas = np.array([inputs[k].sigma for k in INPUT_NAMES], float)
    R0, M0 = invert_magnet_params(*values)

    if method == "linear":
        jac = np.zeros((2, 5))
        for i in range(5):
            if sigmas[i] == 0:
                continue
            h = sigmas[i] / 10.0
            up, dn = values.copy(), values.copy()
            up[i] += h
            dn[i] -= h
            jac[:, i] = (np.array(invert_magnet_params(*up)) - np.array(invert_magnet_params(*dn))) / (2 * h)
        cov = jac @ np.diag(sigmas**2) @ jac.T
        sR, sM = np.sqrt(np.diag(cov))
        corr = float(cov[0, 1] / (sR * sM)) if sR > 0 and sM > 0 else 0.0
        return InversionResult(R0, M0, float(sR), float(sM), corr, "linear", 0, 0.0)

    if method != "monte_carlo":
        raise DomainError(f"unknown method {method!r}")
    if n_samples < 1000:
        raise DomainError("monte_carlo needs n_samples >= 1000")
    z = rng.standard_normal(seed, (0x1417,), (n_samples, 5))
    draws = values + z * sigmas
    R = np.empty(n_samples)
    M = np.empty(n_samples)
    for start in range(0, n_samples, MC_CHUNK):
        sl = slice(start, min(start + MC_CHUNK, n_samples))
        d = draws[sl]
        bad_input = np.any(d <= 0, axis=1)
        r, m = _newton_batch(*d.T)
        r[bad_input] = np.nan
        m[bad_input] = np.nan
        R[sl], M[sl] = r, m
    good = np.isfinite(R) & np.isfinite(M)
    failed = 1.0 - good.mean()
    if failed > MAX_FAILED_FRACTION:
        raise MonteCarloFailureError(f"{failed:.2%} of Monte-Carlo draws failed to invert")
    return _summary(R[good], M[good], R0, M0, "monte_carlo", n_samples, float(failed))


def fit_intrinsic_beta(f_alpha, f_prime, sigma=None):
    """Fit f' = sqrt(f0^2 + f_alpha^2) for the intrinsic frequency f0.

    Also used for the z mode.  Returns ``(f0, sigma_f0)`` with sigma from
    the fit covariance (absolute per-point sigmas; unit weights if omitted).
    """
    fa = np.atleast_1d(np.asarray(f_alpha, float))
    fp = np.atleast_1d(np.asarray(f_prime, float))
    if fa.size == 0 or fa.shape != fp.shape:
        raise DegenerateFitError("need matching, non-empty f_alpha and f_prime arrays")
    s = np.ones_like(fp) if sigma is None else np.broadcast_to(np.asarray(sigma, float), fp.shape)
    if np.any(s <= 0):
        raise DomainError("sigmas must be > 0")
    w = 1.0 / s**2
    # exact weighted solution of the linearized problem in f0^2 as the start
    f0sq = np.sum(w * (fp**2 - fa**2)) / np.sum(w)
    if not f0sq > 0:
        raise DegenerateFitError("data imply a non-positive intrinsic frequency squared")

    def resid(p):
        return (fp - np.sqrt(p[0] ** 2 + fa**2)) / s

    def jac(p):
        return (-p[0] / np.sqrt(p[0] ** 2 + fa**2) / s)[:, None]

    fit = levenberg_marquardt(resid, [np.sqrt(f0sq)], names=("f0",), jac=jac)
    return abs(float(fit.values[0])), float(fit.sigmas[0])


def viscous_linewidth(radius, viscosity, density):
    """Librational linewidth (Hz) from Stokes rotational drag: 15 eta / (2 pi rho R^2)."""
    return 15.0 * viscosity / (2.0 * np.pi * density * radius**2)


def radius_from_viscous_linewidth(linewidth, viscosity, density):
    for name, v in (("linewidth", linewidth), ("viscosity", viscosity), ("density", density)):
        if not np.all(np.asarray(v) > 0):
            raise DomainError(f"{name} must be > 0")
    return np.sqrt(15.0 * viscosity / (2.0 * np.pi * density * linewidth))


def knudsen_number(mean_free_path, radius):
    if not radius > 0 or mean_free_path < 0:
        raise DomainError("need radius > 0 and mean free path >= 0")
    return mean_free_path / radius
