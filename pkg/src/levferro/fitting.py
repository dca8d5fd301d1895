"""Damped Gauss-Newton least squares shared by every fit in the package.

Residual functions return *weighted* residuals ``(y - model) / sigma`` so that
``chi2 = sum(r**2)``.  The damping factor follows the usual Levenberg schedule
(start 1e-3, x10 on a rejected step, /10 on an accepted one) applied to the
diagonal of the normal matrix (Marquardt scaling).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError

DEGENERATE_COND = 1e12


@dataclass
class FitResult:
    names: tuple[str, ...]
    values: np.ndarray
    covariance: np.ndarray
    chi2: float
    dof: int
    n_iter: int
    condition: float
    jacobian: np.ndarray = field(repr=False)

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, np.inf))

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else float("nan")

    @property
    def degenerate(self) -> bool:
        """True when the normal matrix is numerically singular."""
        return not np.isfinite(self.condition) or self.condition > DEGENERATE_COND

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def sigma(self, name: str) -> float:
        return float(self.sigmas[self.names.index(name)])

    def as_dict(self) -> dict:
        return {
            "parameters": {n: float(v) for n, v in zip(self.names, self.values)},
            "sigmas": {n: float(s) for n, s in zip(self.names, self.sigmas)},
            "covariance": self.covariance.tolist(),
            "chi2": float(self.chi2),
            "dof": int(self.dof),
            "reduced_chi2": float(self.reduced_chi2),
            "degenerate": bool(self.degenerate),
        }


def numerical_jacobian(fun, p, rel_step=1e-7):
    """Central-difference Jacobian of a vector function."""
    p = np.asarray(p, float)
    f0 = np.asarray(fun(p), float)
    jac = np.empty((f0.size, p.size))
    for i in range(p.size):
        h = rel_step * max(abs(p[i]), 1.0)
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        jac[:, i] = (np.asarray(fun(up)) - np.asarray(fun(dn))) / (2.0 * h)
    return jac


def _covariance(jac):
    jtj = jac.T @ jac
    d = np.sqrt(np.diag(jtj))
    zero = d == 0
    if np.all(zero):
        return np.full(jtj.shape, np.inf), np.inf
    if np.any(zero):
        # parameters the residuals ignore: infinite variance, rest from the sub-block
        keep = ~zero
        sub, _ = _covariance(jac[:, keep])
        cov = np.full(jtj.shape, np.inf)
        cov[np.ix_(keep, keep)] = sub
        return cov, np.inf
    scaled = jtj / np.outer(d, d)
    cond = np.linalg.cond(scaled)
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        cov = np.linalg.pinv(scaled) / np.outer(d, d)
        # directions the data do not constrain get infinite variance
        w, v = np.linalg.eigh(scaled)
        null = w < w.max() * np.finfo(float).eps * 10
        bad = np.any(np.abs(v[:, null]) > 1e-3, axis=1)
        cov[bad, :] = np.inf
        cov[:, bad] = np.inf
        return cov, cond
    return np.linalg.inv(scaled) / np.outer(d, d), cond


def levenberg_marquardt(residual, p0, names=None, jac=None, lam0=1e-3, max_iter=500,
                        ftol=1e-15, xtol=1e-14, gtol=1e-14):
    """Minimize ``sum(residual(p)**2)``.

    Parameters
    ----------
    residual : callable
        Weighted residual vector as a function of the parameter vector.
    p0 : array_like
        Starting point.
    jac : callable, optional
        Analytic Jacobian of ``residual``; central differences otherwise.

    Returns
    -------
    FitResult
        Covariance is ``(J^T J)^-1`` at the optimum (absolute sigmas).

    Raises
    ------
    ConvergenceError
        If the iteration cap is reached before any convergence test passes.
    """
    p = np.asarray(p0, dtype=float).copy()
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(p.size))
    jacf = jac if jac is not None else (lambda q: numerical_jacobian(residual, q))
    r = np.asarray(residual(p), float)
    chi2 = float(r @ r)
    if not np.isfinite(chi2):
        raise ConvergenceError("non-finite residuals at the starting point")
    lam = lam0
    J = jacf(p)
    for it in range(1, max_iter + 1):
        g = J.T @ r
        A = J.T @ J
        if np.max(np.abs(g)) <= gtol * max(chi2, 1e-300) ** 0.5 * max(np.sqrt(np.max(np.diag(A))), 1e-300):
            break
        diag = np.diag(A).copy()
        diag[diag == 0] = 1.0
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p + step
            r_new = np.asarray(residual(trial), float)
            chi2_new = float(r_new @ r_new)
            if np.isfinite(chi2_new) and chi2_new <= chi2:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        dchi = chi2 - chi2_new
        small_step = np.all(np.abs(step) <= xtol * (np.abs(p) + xtol))
        p, r, chi2 = trial, r_new, chi2_new
        lam = max(lam / 10.0, 1e-12)
        J = jacf(p)
        if small_step or dchi <= ftol * max(chi2, 1e-300):
            break
    else:
        raise ConvergenceError(f"no convergence after {max_iter} iterations")

    cov, cond = _covariance(J)
    return FitResult(
        names=names,
        values=p,
        covariance=cov,
        chi2=chi2,
        dof=r.size - p.size,
        n_iter=it,
        condition=cond,
        jacobian=J,
    )
