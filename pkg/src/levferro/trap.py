"""Magnetized sphere levitated inside a spherical superconducting cavity.

The image-dipole energy of a point dipole at distance ``r`` from the centre of
a superconducting cavity of radius ``a`` is written in the reduced variable
``s = (r/a)**2``::

    U(r, beta) = C/a**3 * phi(s) * (1 + s*sin(beta)**2) + m*g*(a - r)
    phi(s)     = 1 / ((1 + s) * (1 - s)**3)
    C          = mu0 * mu**2 / (4*pi)

``beta`` is the tilt of the dipole out of the horizontal plane.  All radial
derivatives used by the mode frequencies are closed-form; ``potential_energy``
is kept independent of them so finite differences can check the algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import MU_0
from .errors import ConvergenceError, DomainError, NoEquilibriumError

SCAN_POINTS = 512
MAX_REFINE = 200


@dataclass(frozen=True)
class MagnetParams:
    """Hard-ferromagnetic sphere: radius (m), density (kg/m^3), magnetization (A/m)."""

    radius: float
    density: float
    magnetization: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"radius must be > 0, got {self.radius!r}")
        if not self.density > 0:
            raise DomainError(f"density must be > 0, got {self.density!r}")
        if not self.magnetization >= 0:
            raise DomainError(f"magnetization must be >= 0, got {self.magnetization!r}")

    @property
    def volume(self) -> float:
        return 4.0 * np.pi * self.radius**3 / 3.0

    @property
    def mass(self) -> float:
        return self.density * self.volume

    @property
    def moment(self) -> float:
        """Magnetic dipole moment mu = M V (A m^2)."""
        return self.magnetization * self.volume

    @property
    def inertia(self) -> float:
        """Moment of inertia of a uniform sphere, 2/5 m R^2 (kg m^2)."""
        return 0.4 * self.mass * self.radius**2


@dataclass(frozen=True)
class TrapGeometry:
    """Spherical cavity of radius ``radius`` (m) under gravity ``g`` (m/s^2)."""

    radius: float
    g: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"cavity radius must be > 0, got {self.radius!r}")
        if not self.g > 0:
            raise DomainError(f"g must be > 0, got {self.g!r}")


@dataclass(frozen=True)
class EquilibriumState:
    r_eq: float
    z0: float
    beta_eq: float = 0.0


def derived_properties(magnet: MagnetParams) -> dict[str, float]:
    return {
        "V": magnet.volume,
        "m": magnet.mass,
        "mu": magnet.moment,
        "I": magnet.inertia,
    }


# -- reduced image potential and its derivatives in s = (r/a)^2 -------------

def _phi(s):
    return 1.0 / ((1.0 + s) * (1.0 - s) ** 3)


def _dphi(s):
    return 2.0 * (1.0 + 2.0 * s) / ((1.0 + s) ** 2 * (1.0 - s) ** 4)


def _d2phi(s):
    return 4.0 * (2.0 + 5.0 * s + 5.0 * s * s) / ((1.0 + s) ** 3 * (1.0 - s) ** 5)


def _coupling(moment):
    return MU_0 * np.square(moment) / (4.0 * np.pi)


def _check_inside(magnet: MagnetParams, trap: TrapGeometry, r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r >= trap.radius):
        raise DomainError("magnet centre must satisfy 0 < r < a")
    if magnet.radius >= trap.radius:
        raise DomainError("magnet radius must be smaller than the cavity radius")
    return r


def potential_energy(magnet: MagnetParams, trap: TrapGeometry, r, beta=0.0):
    """Total potential energy U(r, beta) in joules (broadcasts over r, beta)."""
    r = _check_inside(magnet, trap, r)
    a = trap.radius
    s = (r / a) ** 2
    tilt = 1.0 + s * np.sin(beta) ** 2
    u = _coupling(magnet.moment) / a**3 * _phi(s) * tilt + magnet.mass * trap.g * (a - r)
    return u[()] if isinstance(u, np.ndarray) else u


def _grad_r(C, m, a, g, r):
    s = (r / a) ** 2
    return C / a**4 * 2.0 * (r / a) * _dphi(s) - m * g


def _curv_r(C, a, r):
    s = (r / a) ** 2
    return C / a**5 * (2.0 * _dphi(s) + 4.0 * s * _d2phi(s))


def _curv_beta(C, a, r):
    s = (r / a) ** 2
    return C / a**3 * 2.0 * s * _phi(s)


def potential_gradient_r(magnet: MagnetParams, trap: TrapGeometry, r):
    """dU/dr at beta = 0 (N)."""
    r = _check_inside(magnet, trap, r)
    return _grad_r(_coupling(magnet.moment), magnet.mass, trap.radius, trap.g, r)


def curvature_z(magnet: MagnetParams, trap: TrapGeometry, r):
    """d2U/dz2 = d2U/dr2 at beta = 0 (N/m)."""
    r = _check_inside(magnet, trap, r)
    return _curv_r(_coupling(magnet.moment), trap.radius, r)


def curvature_beta(magnet: MagnetParams, trap: TrapGeometry, r):
    """d2U/dbeta2 at beta = 0 (J/rad^2)."""
    r = _check_inside(magnet, trap, r)
    return _curv_beta(_coupling(magnet.moment), trap.radius, r)


def _equilibrium_radius(R, rho, M, a, g, scan=True):
    """Vectorized equilibrium search; NaN where no levitating minimum exists.

    With ``scan`` the gap ``a - r`` is scanned on a log grid over
    ``[R, a - R]`` for a sign change of dU/dr.  dU/dr is strictly increasing
    in r (phi'' > 0 on (0, 1)), so the batch path only checks the bracket
    end points and starts from the flat-plane estimate instead.  Either way
    the root is refined by Newton steps on dU/dr, safeguarded by bisection.
    """
    R, rho, M, a, g = np.broadcast_arrays(*(np.atleast_1d(np.asarray(x, float)) for x in (R, rho, M, a, g)))
    V = 4.0 * np.pi * R**3 / 3.0
    m = rho * V
    C = _coupling(M * V)
    out = np.full(R.shape, np.nan)
    ok = (a > 2.0 * R) & (C > 0)
    if not np.any(ok):
        return out
    C1, m1, a1, g1, R1 = C[ok], m[ok], a[ok], g[ok], R[ok]

    if scan:
        t = np.linspace(0.0, 1.0, SCAN_POINTS)
        gaps = R1[:, None] * ((a1 - R1) / R1)[:, None] ** t
        grad = _grad_r(C1[:, None], m1[:, None], a1[:, None], g1[:, None], a1[:, None] - gaps)
        # dU/dr decreases along increasing gap; look for + -> - transitions
        change = (grad[:, :-1] > 0) & (grad[:, 1:] <= 0)
        has = change.any(axis=1)
        k = np.argmax(change, axis=1)
        rows = np.arange(gaps.shape[0])
        r_hi = a1 - gaps[rows, k]
        r_lo = a1 - gaps[rows, k + 1]
        r = 0.5 * (r_lo + r_hi)
    else:
        r_hi = a1 - R1
        r_lo = R1.copy()
        has = (_grad_r(C1, m1, a1, g1, r_hi) > 0) & (_grad_r(C1, m1, a1, g1, r_lo) <= 0)
        z_plane = (3.0 * C1 / (16.0 * m1 * g1)) ** 0.25
        r = np.clip(a1 - z_plane, r_lo, r_hi)

    for _ in range(MAX_REFINE):
        f = _grad_r(C1, m1, a1, g1, r)
        fp = _curv_r(C1, a1, r)
        pos = f > 0
        r_hi = np.where(pos, r, r_hi)
        r_lo = np.where(pos, r_lo, r)
        step = r - f / fp
        inside = (step > r_lo) & (step < r_hi)
        r_new = np.where(inside, step, 0.5 * (r_lo + r_hi))
        done = np.abs(r_new - r) <= 4.0 * np.finfo(float).eps * a1
        r = r_new
        if np.all(done | ~has):
            break
    else:
        raise ConvergenceError("equilibrium refinement did not converge")

    out[ok] = np.where(has, r, np.nan)
    return out


def find_equilibrium(magnet: MagnetParams, trap: TrapGeometry) -> EquilibriumState:
    if magnet.radius * 2.0 >= trap.radius:
        raise NoEquilibriumError("magnet does not fit inside the cavity")
    r = _equilibrium_radius(magnet.radius, magnet.density, magnet.magnetization, trap.radius, trap.g)[0]
    if not np.isfinite(r):
        raise NoEquilibriumError(
            "dU/dr has no sign change on (R, a - R): no levitating minimum "
            f"(R={magnet.radius:.3e} m, M={magnet.magnetization:.3e} A/m)"
        )
    return EquilibriumState(r_eq=float(r), z0=float(trap.radius - r), beta_eq=0.0)


def _frequency(curvature, inertia):
    curvature = np.asarray(curvature, float)
    if np.any(curvature <= 0):
        raise DomainError("non-positive curvature: not a stable equilibrium")
    return np.sqrt(curvature / inertia) / (2.0 * np.pi)


def mode_frequency_z(magnet: MagnetParams, trap: TrapGeometry, eq: EquilibriumState) -> float:
    return float(_frequency(curvature_z(magnet, trap, eq.r_eq), magnet.mass))


def mode_frequency_beta(magnet: MagnetParams, trap: TrapGeometry, eq: EquilibriumState) -> float:
    return float(_frequency(curvature_beta(magnet, trap, eq.r_eq), magnet.inertia))


def mode_frequencies(magnet: MagnetParams, trap: TrapGeometry) -> tuple[float, float, EquilibriumState]:
    """(f_z, f_beta, equilibrium) for a magnet in a trap."""
    eq = find_equilibrium(magnet, trap)
    return mode_frequency_z(magnet, trap, eq), mode_frequency_beta(magnet, trap, eq), eq


def forward_frequencies(R, M, rho, a, g):
    """Vectorized (f_z, f_beta) over arrays of parameters; NaN where no equilibrium."""
    R, M, rho, a, g = np.broadcast_arrays(*(np.asarray(x, float) for x in (R, M, rho, a, g)))
    r = _equilibrium_radius(R, rho, M, a, g, scan=False).reshape(R.shape)
    V = 4.0 * np.pi * R**3 / 3.0
    m = rho * V
    inertia = 0.4 * m * R**2
    C = _coupling(M * V)
    with np.errstate(invalid="ignore"):
        fz = np.sqrt(_curv_r(C, a, r) / m) / (2.0 * np.pi)
        fb = np.sqrt(_curv_beta(C, a, r) / inertia) / (2.0 * np.pi)
    return fz, fb


def beta_shifted(f_beta_intrinsic, f_alpha):
    """beta-mode frequency stiffened by the trapped field: sqrt(f_beta^2 + f_alpha^2)."""
    return np.hypot(f_beta_intrinsic, f_alpha)


def alpha_frequency(moment, field, inertia):
    """alpha-mode frequency (Hz) for rotational stiffness mu*B about inertia I."""
    field = np.asarray(field, float)
    if np.any(field < 0):
        raise DomainError("field magnitude must be >= 0")
    f = np.sqrt(moment * field / inertia) / (2.0 * np.pi)
    return float(f) if np.ndim(f) == 0 else f
