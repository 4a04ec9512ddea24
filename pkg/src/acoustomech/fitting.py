"""Parameter recovery from reflection spectra, ringdowns and AMIT windows."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import find_peaks

from .circuit import ModeCharacterization
from .errors import (
    BackgroundDominatedError,
    ConfigError,
    DegenerateFitError,
    FitNonConvergenceError,
    MultiDipError,
    NonDecayingTraceError,
    ValidityWarning,
    WindowUnresolvedError,
)
from .linear_response import (
    EnhancedCouplings,
    SystemParams,
    effective_linewidth,
    enhancement_factor,
    transmission_from_couplings,
)
from .lsq import FitResult, least_squares
from .spectrum import ComplexSpectrum

__all__ = [
    "FitResult",
    "least_squares",
    "reflection_model",
    "fit_reflection_mode",
    "fit_ringdown",
    "RingdownFit",
    "fit_amit_window",
    "AmitFit",
]


def _noise_floor(v: np.ndarray) -> float:
    # second differences cancel smooth structure; 1.4826*MAD -> sigma, /sqrt(6)
    d2 = np.diff(v, 2)
    a = np.concatenate([d2.real, d2.imag]) if np.iscomplexobj(d2) else d2
    return float(1.4826 * np.median(np.abs(a - np.median(a))) / np.sqrt(6.0))


def reflection_model(omega, omega_res, kappa_in, kappa_ex, scale=1.0 + 0j):
    """c*(1 - kappa_ex/(kappa/2 - i(w - w_res))) in the physics convention."""
    k = kappa_in + kappa_ex
    return scale * (1.0 - kappa_ex / (k / 2 - 1j * (np.asarray(omega) - omega_res)))


def fit_reflection_mode(spectrum: ComplexSpectrum, return_fit: bool = True):
    """Fit a single resonance dip with a complex background scale.

    Free parameters are omega_res, kappa_in, kappa_ex (all rad/s) and the
    complex scale c. A constant complex offset is not fitted: on a window a
    few linewidths wide it is degenerate with the scale and the coupling.

    Returns
    -------
    ModeCharacterization, FitResult

    Raises
    ------
    MultiDipError, BackgroundDominatedError, FitNonConvergenceError
    """
    w = spectrum.grid
    s = spectrum.as_physics()
    n = w.size
    wc = 0.5 * (w[0] + w[-1])
    W = 0.5 * (w[-1] - w[0])
    u = (w - wc) / W

    edge = max(2, n // 50)
    c0 = 0.5 * (np.mean(s[:edge]) + np.mean(s[-edge:]))
    feat = np.abs(s - c0)
    depth = float(feat.max())
    noise = np.sqrt(2.0) * _noise_floor(s)  # rms |complex noise|
    if depth <= 3 * noise or depth <= 1e-9 * abs(c0):
        raise BackgroundDominatedError(f"dip depth {depth:.3g} is not above 3x the noise floor {noise:.3g}")
    p2 = feat ** 2
    peaks, _ = find_peaks(p2, height=0.3 * p2.max(), prominence=0.3 * p2.max())
    if peaks.size > 1:
        raise MultiDipError(f"{peaks.size} dips found in the window")
    i0 = int(np.argmax(p2))
    above = np.nonzero(p2 >= 0.5 * p2[i0])[0]
    fwhm = max(u[above[-1]] - u[above[0]], 2.0 / (n - 1))
    kap = fwhm
    kex = min(max(kap * depth / (2 * abs(c0)), 1e-6 * kap), kap)
    kin = max(kap - kex, 1e-3 * kap)
    x0 = [u[i0], kin, kex, c0.real, c0.imag]

    def resid(p):
        return reflection_model(u, p[0], p[1], p[2], p[3] + 1j * p[4]) - s

    lo = [-np.inf, 0.0, 0.0, -np.inf, -np.inf]
    hi = [np.inf] * 5
    fit = least_squares(resid, x0, bounds=(lo, hi), names=["omega_res", "kappa_in", "kappa_ex", "re_c", "im_c"],
                        x_scale=[kap, kap, kap, abs(c0), abs(c0)])
    unit = {"omega_res": W, "kappa_in": W, "kappa_ex": W, "re_c": 1.0, "im_c": 1.0}
    fit.params = {k: v * unit[k] for k, v in fit.params.items()}
    fit.params["omega_res"] += wc
    fit.stderr = {k: v * unit[k] for k, v in fit.stderr.items()}
    if fit.covariance is not None:
        sc = np.array([unit[k] for k in ["omega_res", "kappa_in", "kappa_ex", "re_c", "im_c"]])
        fit.covariance = fit.covariance * np.outer(sc, sc)
    if not fit.converged:
        raise FitNonConvergenceError(f"reflection fit did not converge: {fit.message}")
    p = fit.params
    mode = ModeCharacterization(p["omega_res"], max(p["kappa_in"], 0.0), max(p["kappa_ex"], 0.0))
    return (mode, fit) if return_fit else mode


@dataclass(frozen=True)
class RingdownFit:
    """Ringdown result. ``tau`` is the amplitude 1/e time and
    ``gamma_m = 2/tau`` by construction."""

    tau: float
    gamma_m: float
    fit: FitResult


def fit_ringdown(trace, signal: str = "b", t=None, method: str = "envelope") -> RingdownFit:
    """Fit |s(t)| = A exp(-t/tau) to a decaying trace.

    Parameters
    ----------
    trace : TimeTrace or complex ndarray
        Trace whose ``signal`` attribute (``"a"`` or ``"b"``) is used; a bare
        array needs the sample times ``t``.
    method : {"envelope", "complex"}
        ``"envelope"`` fits the magnitude. ``"complex"`` fits both quadratures
        to c exp(-(1/tau + i w) t), which keeps additive complex noise
        Gaussian and so avoids the Rician bias of |s| once the tail reaches
        the noise floor. ``w`` is the residual rotation of the demodulated
        signal, aliased into the sampling band if the record is undersampled.

    Notes
    -----
    The reported tau is the amplitude decay time. The damping convention is
    locked to gamma_m = 2/tau, so tau = 36.7 ms corresponds to
    gamma_m/2pi = 8.68 Hz.

    Raises
    ------
    NonDecayingTraceError
        The log-envelope does not fall over the record.
    """
    if t is None:
        t = trace.t
        z = getattr(trace, signal)
    else:
        z = trace
    t = np.asarray(t, dtype=float)
    env = np.abs(np.asarray(z))
    T = float(t[-1] - t[0])
    if T <= 0 or env.size < 3:
        raise ConfigError("ringdown needs at least three time-ordered samples")
    ok = env > 0
    slope, icpt = np.polyfit((t[ok] - t[0]) / T, np.log(env[ok]), 1)
    if not slope < 0 or env[-1] >= env[0]:
        raise NonDecayingTraceError("trace envelope does not decay")
    s = (t - t[0]) / T

    def resid(p):
        return p[0] * np.exp(-p[1] * s) - env

    if method not in ("envelope", "complex"):
        raise ConfigError("method must be 'envelope' or 'complex'")
    A0 = float(np.exp(icpt))
    fit = least_squares(resid, [A0, -slope], bounds=([0.0, 0.0], [np.inf, np.inf]),
                        names=["amplitude", "rate"], x_scale=[A0, 1.0])
    if method == "complex":
        z = np.asarray(z, dtype=complex)
        ds = np.diff(s)
        # mean phase advance per unit s from the lag-one product, alias-safe
        w0 = -np.angle(np.sum(z[1:] * np.conj(z[:-1]))) / float(np.mean(ds))
        r0 = fit.params["rate"]
        basis = np.exp(-(r0 + 1j * w0) * s)
        c0 = np.vdot(basis, z) / np.vdot(basis, basis).real

        def cresid(p):
            return (p[0] + 1j * p[1]) * np.exp(-(p[2] + 1j * p[3]) * s) - z

        fit = least_squares(cresid, [c0.real, c0.imag, r0, w0], names=["re_c", "im_c", "rate", "omega"],
                            bounds=([-np.inf, -np.inf, 0.0, -np.inf], [np.inf] * 4),
                            x_scale=[abs(c0), abs(c0), 1.0, 1.0])
        c = fit.params["re_c"] + 1j * fit.params["im_c"]
        cov = fit.covariance
        jac = np.array([c.real, c.imag]) / abs(c) if abs(c) > 0 else np.zeros(2)
        amp_err = float(np.sqrt(max(jac @ cov[:2, :2] @ jac, 0.0))) if cov is not None else float("nan")
        fit.stderr["amplitude"] = amp_err
        fit.params["amplitude"] = abs(c)
    rate = fit.params["rate"] / T
    tau = 1.0 / rate
    # amplitude refers to t[0]; tau by error propagation
    srate = fit.stderr["rate"] / T
    params = {"amplitude": fit.params["amplitude"], "tau": tau}
    stderr = {"amplitude": fit.stderr["amplitude"], "tau": srate * tau * tau}
    if method == "complex":
        params["omega"] = fit.params["omega"] / T
        stderr["omega"] = fit.stderr["omega"] / T
    fit.params, fit.stderr = params, stderr
    return RingdownFit(tau=tau, gamma_m=2.0 / tau, fit=fit)


@dataclass(frozen=True)
class AmitFit:
    """AMIT window fit result; rates in rad/s.

    ``ratio_stderr`` is the linearized (delta-method) error of |G_disp/G_diss|.
    """

    couplings: EnhancedCouplings
    gamma_eff: float
    ratio: float
    fit: FitResult
    ratio_stderr: float = float("nan")


def fit_amit_window(spectrum: ComplexSpectrum, known: SystemParams, magnitude_only: bool = False,
                    background: str = "real", max_condition: float = 1e12, n_starts: int = 6,
                    mirror: bool = True, gtol: float = 1e-13) -> AmitFit:
    """Fit the probe-response formula to a measured AMIT window.

    The cavity (kappa_in, kappa_c) and mechanics (omega_m, gamma_m) come from
    ``known``; the pump sits at Delta = -omega_m. Free parameters are |G_disp|,
    the complex ratio rho = G_diss/G_disp in Cartesian form (no phase
    singularity at rho = 0) and a background scale, real by default or complex
    with ``background="complex"``.

    Starts: the residual is scanned over a fixed grid of ratio magnitudes and
    phases, the ``n_starts`` best grid points are refined, then the winner is
    polished from its mirror images in the ratio plane; the lowest final
    residual wins. ``gtol`` is tighter than the engine default because
    probe responses near a critically coupled dip are small in magnitude.

    Raises
    ------
    WindowUnresolvedError
        The window is narrower than about two grid steps.
    DegenerateFitError
        The curvature matrix is too ill-conditioned to pin down the ratio.
    """
    if background not in ("real", "complex"):
        raise ConfigError("background must be 'real' or 'complex'")
    d = spectrum.grid
    y = spectrum.as_physics()
    D = -known.omega_m
    bare = 1.0 - known.kappa_c / (known.kappa / 2 - 1j * d)
    edge = max(2, d.size // 50)
    s0 = 0.5 * (np.mean(y[:edge] / bare[:edge]) + np.mean(y[-edge:] / bare[-edge:]))
    feat = np.abs(y / s0 - bare) ** 2
    i0 = int(np.argmax(feat))
    above = np.nonzero(feat >= 0.5 * feat[i0])[0]
    step = spectrum.step
    width = (above[-1] - above[0]) * step
    if width < 2 * step or feat[i0] <= 9 * _noise_floor(y) ** 2:
        raise WindowUnresolvedError("mechanical window narrower than the grid resolution")
    G0 = np.sqrt(max(width - known.gamma_m, 0.1 * width) * known.kappa / 4)

    def model(p):
        c = EnhancedCouplings(complex(p[0] * G0), complex(p[0] * G0 * (p[1] + 1j * p[2])), 0j, D)
        sc = p[3] + 1j * p[4] if background == "complex" else p[3]
        return sc * transmission_from_couplings(known, c, d)

    def resid(p):
        m = model(p)
        return np.abs(m) - np.abs(y) if magnitude_only else m - y

    nb = 2 if background == "complex" else 1
    sc0 = [s0.real, s0.imag] if background == "complex" else [abs(s0)]
    # deterministic coarse start over the ratio plane, background scale
    # profiled out linearly; the best few grid points are refined
    phase = np.angle(enhancement_factor(known, D))
    starts = []
    for mag in (0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 20.0):
        for th in ((0.0,) if mag == 0 else phase + np.arange(12) * np.pi / 6):
            for gs in (0.4, 0.6, 0.8, 1.0, 1.25, 1.6, 2.5):
                shape = model([gs, mag * np.cos(th), mag * np.sin(th)] + ([1.0, 0.0] if nb == 2 else [1.0]))
                if magnitude_only:
                    shape, target = np.abs(shape), np.abs(y)
                else:
                    target = y
                mm = float(np.vdot(shape, shape).real)
                sc = np.vdot(shape, target) / mm if mm > 0 else s0
                sc = [sc.real, sc.imag] if nb == 2 else [float(abs(sc))]
                p = [gs, mag * np.cos(th), mag * np.sin(th)] + sc
                starts.append((float(np.sum(np.abs(resid(p)) ** 2)), len(starts), p))
    starts.sort(key=lambda t: (t[0], t[1]))
    names = ["G_disp", "re_rho", "im_rho", "re_scale"] + (["im_scale"] if nb == 2 else [])
    lo = [0.0, -np.inf, -np.inf] + [-np.inf] * nb
    fit = None
    for _, _, x0 in starts[:n_starts]:
        cand = least_squares(resid, x0, bounds=(lo, [np.inf] * (3 + nb)), names=names,
                             x_scale=[1.0, 1.0, 1.0] + [abs(s0)] * nb, gtol=gtol)
        if fit is None or cand.residual < fit.residual:
            fit = cand
    # the ratio plane has near-mirror basins; polish from the reflections too
    q = [fit.params[n] for n in names]
    for sr, si in ((-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)) if mirror else ():
        x0 = [q[0], sr * q[1], si * q[2]] + q[3:]
        cand = least_squares(resid, x0, bounds=(lo, [np.inf] * (3 + nb)), names=names,
                             x_scale=[1.0, 1.0, 1.0] + [abs(s0)] * nb, gtol=gtol)
        if cand.residual < fit.residual:
            fit = cand
    A = fit.curvature
    if A is not None:
        dg = np.sqrt(np.abs(np.diag(A)))
        dg[dg == 0] = 1.0
        cond = np.linalg.cond(A / np.outer(dg, dg))
        fit.condition = float(cond)
        if not np.isfinite(cond) or cond > max_condition:
            raise DegenerateFitError(f"AMIT fit curvature condition number {cond:.3g}")
    p = fit.params
    Gd = p["G_disp"] * G0
    rho = p["re_rho"] + 1j * p["im_rho"]
    couplings = EnhancedCouplings(complex(Gd), complex(Gd * rho), 0j, D)
    fit.params = dict(p, G_disp=Gd)
    fit.stderr = dict(fit.stderr, G_disp=fit.stderr["G_disp"] * G0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        g_eff = effective_linewidth(known, couplings)
    ratio = 1.0 / abs(rho) if rho != 0 else np.inf
    ratio_err = float("nan")
    if fit.covariance is not None and rho != 0:
        jac = -np.array([rho.real, rho.imag]) / abs(rho) ** 3
        ratio_err = float(np.sqrt(max(jac @ fit.covariance[1:3, 1:3] @ jac, 0.0)))
    return AmitFit(couplings=couplings, gamma_eff=g_eff, ratio=ratio, fit=fit, ratio_stderr=ratio_err)
