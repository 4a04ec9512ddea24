"""Damped Gauss-Newton (Levenberg-Marquardt) least-squares driver.

Small, dependency-free apart from numpy; used by every fitter in the package.
Complex residual vectors are split into stacked real and imaginary parts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFiniteResidualError

__all__ = ["FitResult", "least_squares"]


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``residual`` is the Euclidean norm of the final residual vector.
    ``cost_history`` holds ``0.5*|r|^2`` after every accepted step, starting
    with the initial point.
    """

    params: dict
    stderr: dict
    residual: float
    iterations: int
    converged: bool
    message: str = ""
    n_obs: int = 0
    covariance: Optional[np.ndarray] = field(default=None, repr=False)
    cost_history: list = field(default_factory=list, repr=False)
    condition: float = float("nan")
    curvature: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "params": {k: float(v) for k, v in self.params.items()},
            "stderr": {k: float(v) for k, v in self.stderr.items()},
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }

    def to_json(self, **kw) -> str:
        kw.setdefault("indent", 2)
        kw.setdefault("sort_keys", True)
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(
            params=dict(d["params"]),
            stderr=dict(d["stderr"]),
            residual=float(d["residual"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
        )


def _as_real(r) -> np.ndarray:
    r = np.asarray(r)
    if np.iscomplexobj(r):
        r = np.concatenate([r.real.ravel(), r.imag.ravel()])
    return np.asarray(r, dtype=float).ravel()


def _numeric_jacobian(fun, x, r0, lo, hi, scale, rel_step):
    n = x.size
    J = np.empty((r0.size, n))
    for i in range(n):
        h = rel_step * max(abs(x[i]), scale[i])
        xp = x.copy()
        xm = x.copy()
        up = x[i] + h <= hi[i]
        dn = x[i] - h >= lo[i]
        if up and dn:
            xp[i] += h
            xm[i] -= h
            J[:, i] = (fun(xp) - fun(xm)) / (2 * h)
        elif up:
            xp[i] += h
            J[:, i] = (fun(xp) - r0) / h
        else:
            xm[i] -= h
            J[:, i] = (r0 - fun(xm)) / h
    return J


def least_squares(
    fun: Callable,
    x0: Sequence[float],
    args: tuple = (),
    bounds: Optional[tuple] = None,
    names: Optional[Sequence[str]] = None,
    jac: Optional[Callable] = None,
    x_scale: Optional[Sequence[float]] = None,
    max_iter: int = 500,
    gtol: float = 1e-10,
    xtol: float = 1e-12,
    ftol: float = 1e-15,
    rel_step: float = 6e-6,
    damping: float = 1e-6,
) -> FitResult:
    """Minimise ``0.5*|fun(x, *args)|^2``.

    Parameters
    ----------
    fun : callable
        Residual function; may return a complex array.
    x0 : array_like
        Starting point; must lie inside ``bounds``.
    bounds : (lower, upper), optional
        Box constraints, enforced by projection of every trial step.
    jac : callable, optional
        Analytic Jacobian of the (real-stacked) residual. Central differences
        are used otherwise, with step ``rel_step*max(|x_i|, x_scale_i)``.

    Returns
    -------
    FitResult
        Hitting ``max_iter`` is not an error: the result comes back with
        ``converged=False``.

    Notes
    -----
    Termination tests, in order: scaled gradient
    ``max_i |g_i|/|J_i| < gtol*(1+|r|)``; step ``|dx| < xtol*(|x|+xtol)``;
    relative cost decrease of an accepted step ``< ftol``.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    names = list(names) if names is not None else [f"p{i}" for i in range(n)]
    if len(names) != n:
        raise ValueError("names and x0 differ in length")
    if bounds is None:
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
    else:
        lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (n,)).copy()
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError("initial point lies outside the bounds")
    scale = np.ones(n) if x_scale is None else np.asarray(x_scale, dtype=float)

    def res(p):
        return _as_real(fun(p, *args))

    r = res(x)
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidualError("residual is not finite at the initial point")
    m = r.size

    def jacobian(p, rp):
        if jac is not None:
            return np.atleast_2d(np.asarray(jac(p, *args), dtype=float))
        return _numeric_jacobian(res, p, rp, lo, hi, scale, rel_step)

    cost = 0.5 * float(r @ r)
    J = jacobian(x, r)
    A = J.T @ J
    g = J.T @ r
    D2 = np.maximum(np.diag(A), np.finfo(float).tiny)
    lam = damping
    nu = 2.0
    history = [cost]
    converged = False
    message = "maximum number of iterations reached"
    it = 0
    while it < max_iter:
        it += 1
        col = np.sqrt(np.maximum(np.diag(A), np.finfo(float).tiny))
        if np.max(np.abs(g) / col) < gtol * (1.0 + np.sqrt(2 * cost)):
            converged, message = True, "gradient tolerance reached"
            break
        D2 = np.maximum(D2, np.diag(A))
        accepted = False
        while not accepted:
            try:
                dx = np.linalg.solve(A + lam * np.diag(D2), -g)
            except np.linalg.LinAlgError:
                dx = -np.linalg.pinv(A + lam * np.diag(D2)) @ g
            x_new = np.clip(x + dx, lo, hi)
            dx = x_new - x
            if np.linalg.norm(dx) < xtol * (np.linalg.norm(x) + xtol):
                converged, message = True, "step tolerance reached"
                break
            r_new = res(x_new)
            cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            pred = -(g @ dx + 0.5 * dx @ (A @ dx))
            rho = (cost - cost_new) / pred if pred > 0 else -1.0
            if cost_new < cost and rho > 0:
                accepted = True
                decrease = cost - cost_new
                old = cost
                x, r, cost = x_new, r_new, cost_new
                history.append(cost)
                J = jacobian(x, r)
                A = J.T @ J
                g = J.T @ r
                lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                if decrease <= ftol * old:
                    converged, message = True, "cost tolerance reached"
            else:
                lam *= nu
                nu *= 2.0
                if lam > 1e30:
                    converged, message = True, "no further decrease possible"
                    break
        if converged:
            break

    dof = max(m - n, 1)
    s2 = 2.0 * cost / dof
    try:
        cond = float(np.linalg.cond(A))
    except np.linalg.LinAlgError:
        cond = np.inf
    cov = s2 * np.linalg.pinv(A)
    err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return FitResult(
        params=dict(zip(names, map(float, x))),
        stderr=dict(zip(names, map(float, err))),
        residual=float(np.sqrt(2 * cost)),
        iterations=it,
        converged=converged,
        message=message,
        n_obs=m,
        covariance=cov,
        cost_history=history,
        condition=cond,
        curvature=A,
    )
