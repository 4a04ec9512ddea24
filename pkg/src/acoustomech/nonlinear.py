"""Nonlinear mean-field dynamics, frequency combs and phase-coherence checks.

Equations integrated in the frame rotating at the cavity frequency, with
X = b + b* the membrane displacement in units of x_zpf and
kappa_ex(X) = kappa_c + g_diss*X::

    da/dt = -i g_disp X a - (kappa_in + kappa_ex(X))/2 a + sqrt(kappa_ex(X)) a_in(t)
    db/dt = -(i w_m + gamma_m/2) b - i g_disp |a|^2
            + g_diss/(2 sqrt(kappa_ex(X))) (a_in a* - a_in* a)
    a_out = a_in - sqrt(kappa_ex(X)) a

The last term of db/dt is the radiation-pressure-like force of the coupling
modulation. Linearized about a red-sideband pump, the mechanical coupling it
produces reduces to g_diss*a_in/(2 sqrt(kappa_c)), the enhanced dissipative
rate of the linear theory.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import find_peaks, get_window
from scipy.special import jv

from . import _kernel
from .errors import (
    ConfigError,
    InstabilityError,
    StepTooLargeError,
    TransientNotSettledError,
    TruncationBoundError,
    ValidityWarning,
)
from .linear_response import (
    HBAR,
    DriveConfig,
    SystemParams,
    effective_linewidth,
    enhanced_couplings,
    input_amplitude,
    intracavity_amplitude,
)

__all__ = [
    "ToneSet",
    "TwoToneDrive",
    "TimeTrace",
    "Tooth",
    "CombSpectrum",
    "LissajousResult",
    "integrate_eom",
    "mean_field_steady_state",
    "time_domain_probe_response",
    "comb_spectrum",
    "bessel_j",
    "phase_modulation_sidebands",
    "phase_modulated_trace",
    "lissajous",
    "kerr_coefficient",
]

TWO_PI = 2.0 * np.pi
MAX_SIDEBAND = 50


@dataclass(frozen=True)
class ToneSet:
    """Drive tones a_in(t) = sum_k A_k exp(-i Delta_k t); A_k in sqrt(photons/s)."""

    amplitudes: tuple
    detunings: tuple

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", tuple(complex(a) for a in self.amplitudes))
        object.__setattr__(self, "detunings", tuple(float(d) for d in self.detunings))
        if len(self.amplitudes) != len(self.detunings):
            raise ConfigError("tone amplitudes and detunings differ in length")

    def tones(self, sys: SystemParams) -> "ToneSet":
        return self

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = np.zeros(t.shape, dtype=complex)
        for a, d in zip(self.amplitudes, self.detunings):
            s = s + a * np.exp(-1j * d * t)
        return s


@dataclass(frozen=True)
class TwoToneDrive:
    """Resonant tone P1 plus a red-sideband tone P2 (watt, at the instrument).

    ``detuning2`` defaults to -omega_m; ``phase`` is applied to the P2 tone.
    ``attenuation`` is the shared line transmission; ``sideband_loss`` is an
    extra power transmission on the P2 channel only (separate generator
    outputs rarely share a cable loss).
    """

    P1: float
    P2: float
    phase: float = 0.0
    attenuation: float = 1.0
    detuning2: Optional[float] = None
    sideband_loss: float = 1.0

    def __post_init__(self):
        if not (self.P1 >= 0 and self.P2 >= 0 and np.isfinite(self.P1) and np.isfinite(self.P2)):
            raise ConfigError("tone powers must be finite and non-negative")
        if not (0 < self.attenuation <= 1):
            raise ConfigError("attenuation must lie in (0, 1]")
        if not (0 < self.sideband_loss <= 1):
            raise ConfigError("sideband_loss must lie in (0, 1]")

    def tones(self, sys: SystemParams) -> ToneSet:
        d2 = -sys.omega_m if self.detuning2 is None else self.detuning2
        a1 = np.sqrt(self.attenuation * self.P1 / (HBAR * sys.omega_au))
        a2 = np.sqrt(self.attenuation * self.sideband_loss * self.P2 / (HBAR * (sys.omega_au + d2))) * np.exp(1j * self.phase)
        return ToneSet((a1, a2), (0.0, d2))


def _as_tones(drive, sys: SystemParams) -> ToneSet:
    if drive is None:
        return ToneSet((), ())
    if isinstance(drive, DriveConfig):
        return ToneSet((input_amplitude(sys, drive),), (drive.detuning,))
    return drive.tones(sys)


@dataclass(frozen=True)
class TimeTrace:
    """Uniformly sampled cavity and mechanical amplitudes.

    ``dt`` is the sample spacing of the record, ``t0`` the time of its first
    sample. ``metadata`` carries the drive tones and the integration settings.
    """

    dt: float
    a: np.ndarray
    b: np.ndarray
    t0: float = 0.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=complex)
        b = np.asarray(self.b, dtype=complex)
        if a.shape != b.shape or a.ndim != 1:
            raise ConfigError("trace arrays must be 1-D and of equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InstabilityError("trace contains non-finite samples")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.a.size)

    def __len__(self):
        return self.a.size

    def output(self) -> np.ndarray:
        """Reflected field a_in - sqrt(kappa_ex(X)) a, from the stored drive."""
        md = self.metadata
        tones = ToneSet(md.get("tone_amplitudes", ()), md.get("tone_detunings", ()))
        kex = md["kappa_c"] + md["g_diss"] * 2.0 * self.b.real
        return tones(self.t) - np.sqrt(kex) * self.a


def _default_dt(sys: SystemParams, tones: ToneSet, samples: int = 128) -> float:
    fmax = max([sys.omega_m] + [abs(d) for d in tones.detunings])
    return TWO_PI / (samples * fmax)


def integrate_eom(sys: SystemParams, drive=None, duration: float = 0.0, dt: Optional[float] = None,
                  n_record: Optional[int] = None, stride: int = 1, initial=(0j, 0j), t0: float = 0.0,
                  bound: float = 1e15, check_step: bool = False) -> TimeTrace:
    """Integrate the nonlinear mean-field equations with fixed-step RK4.

    Parameters
    ----------
    drive : TwoToneDrive, ToneSet, DriveConfig or None
    duration : float
        Integrated time span, seconds.
    dt : float, optional
        Integration step; defaults to 1/128 of the shortest period among
        omega_m and the tone detunings. Must not exceed 1/50 of it.
    n_record : int, optional
        Number of recorded samples, a power of two; by default the largest
        power of two that fits. The record always ends at the final state.
    stride : int
        Record every ``stride``-th step.
    check_step : bool
        Repeat at dt/2 and require the final state to agree within 1e-3.

    Raises
    ------
    InstabilityError
        |a| or |b| exceeds ``bound``, a value turns non-finite, or the
        displacement drives kappa_ex negative.
    StepTooLargeError
    """
    tones = _as_tones(drive, sys)
    dt = _default_dt(sys, tones) if dt is None else float(dt)
    fmax = max([sys.omega_m] + [abs(d) for d in tones.detunings])
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if dt > TWO_PI / (50 * fmax) * (1 + 1e-12):
        raise StepTooLargeError(f"dt = {dt:g} s exceeds 1/50 of the fastest rotating-frame period")
    stride = int(stride)
    n_steps = int(round(duration / dt))
    if n_steps < 1 or stride < 1:
        raise ConfigError("duration must cover at least one step and stride must be >= 1")
    avail = n_steps // stride + 1
    if n_record is None:
        n_record = 1 << (avail.bit_length() - 1)
    n_record = int(n_record)
    if n_record & (n_record - 1) or n_record < 1:
        raise ConfigError("n_record must be a power of two")
    if n_record > avail:
        raise ConfigError(f"n_record = {n_record} exceeds the {avail} available samples")
    start = n_steps - (n_record - 1) * stride

    def run(h, n, st, srt):
        amps = np.array(tones.amplitudes, dtype=np.complex128)
        dets = np.array(tones.detunings, dtype=np.float64)
        out = _kernel.rk4(complex(initial[0]), complex(initial[1]), float(t0), float(h), int(n),
                          int(srt), int(st), n_record, float(sys.kappa_in), float(sys.kappa_c),
                          float(sys.g_disp), float(sys.g_diss), float(sys.omega_m), float(sys.gamma_m),
                          amps, dets, float(bound))
        status, where = out[4], out[5]
        if status == _kernel.BOUND:
            raise InstabilityError(f"amplitude exceeded {bound:g} at t = {t0 + where * h:.6g} s")
        if status == _kernel.KAPPA_NEG:
            raise InstabilityError(f"displacement drove kappa_ex negative at t = {t0 + where * h:.6g} s")
        if status == _kernel.NONFINITE:
            raise InstabilityError(f"non-finite state at t = {t0 + where * h:.6g} s")
        return out

    a_f, b_f, a_rec, b_rec, _, _ = run(dt, n_steps, stride, start)
    if check_step:
        a2, b2, _, _, _, _ = run(dt / 2, 2 * n_steps, 2 * stride, 2 * start)
        scale_a = max(np.max(np.abs(a_rec)), abs(a_f), 1e-300)
        scale_b = max(np.max(np.abs(b_rec)), abs(b_f), 1e-300)
        err = max(abs(a2 - a_f) / scale_a, abs(b2 - b_f) / scale_b)
        if err > 1e-3:
            raise StepTooLargeError(f"halving dt changes the final state by {err:.3g} (relative)")
    md = {
        "tone_amplitudes": tones.amplitudes,
        "tone_detunings": tones.detunings,
        "kappa_c": sys.kappa_c,
        "g_diss": sys.g_diss,
        "omega_m": sys.omega_m,
        "dt_integration": dt,
        "stride": stride,
        "n_steps": n_steps,
    }
    return TimeTrace(dt=dt * stride, a=a_rec, b=b_rec, t0=t0 + start * dt, metadata=md)


def mean_field_steady_state(sys: SystemParams, amplitude: complex, detuning: float,
                            iterations: int = 50):
    """Static solution under one tone: a(t) = a_s exp(-i Delta t), b = b_s.

    Solved by fixed-point iteration on the static displacement.
    """
    X = 0.0
    a = 0j
    b = 0j
    for _ in range(iterations):
        kex = sys.kappa_c + sys.g_diss * X
        if kex <= 0:
            raise InstabilityError("static displacement drives kappa_ex negative")
        a = np.sqrt(kex) * amplitude / ((sys.kappa_in + kex) / 2 - 1j * (detuning - sys.g_disp * X))
        cross = amplitude * np.conj(a)
        force = -1j * sys.g_disp * abs(a) ** 2 + sys.g_diss / (2 * np.sqrt(kex)) * (cross - np.conj(cross))
        b = force / (1j * sys.omega_m + sys.gamma_m / 2)
        X_new = 2 * b.real
        if abs(X_new - X) <= 1e-15 * max(abs(X_new), 1e-300):
            X = X_new
            break
        X = X_new
    return complex(a), complex(b)


def time_domain_probe_response(sys: SystemParams, drive: DriveConfig, deltas: Sequence[float],
                               probe_ratio: float = 1e-3, beat_periods: int = 64,
                               samples_per_period: int = 128, settle: Optional[float] = None) -> np.ndarray:
    """Probe reflection obtained by demodulating simulated traces.

    For each probe detuning the pump (``drive``) and a probe ``probe_ratio``
    times weaker are integrated from the pumped steady state. The step is
    chosen so that one beat period 2pi/(delta - Delta) spans an integer number
    of samples; demodulating over whole beat periods then separates the probe
    line exactly from the pump and its idler.

    ``settle`` defaults to 25/gamma_eff (linear estimate).
    """
    A = input_amplitude(sys, drive)
    D = drive.detuning
    a_s, b_s = mean_field_steady_state(sys, A, D)
    if settle is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ValidityWarning)
            c = enhanced_couplings(sys, intracavity_amplitude(sys, drive), D)
            g = abs(effective_linewidth(sys, c)) if c.G_disp != 0 else sys.gamma_m
        settle = 25.0 / max(g, 1e-300) + 25.0 / sys.kappa
    out = np.empty(len(deltas), dtype=complex)
    for i, d in enumerate(deltas):
        wb = abs(d - D)
        if wb == 0:
            raise ConfigError("probe coincides with the pump")
        dt = TWO_PI / (wb * samples_per_period)
        fmax = max(sys.omega_m, abs(D), abs(d))
        if dt > TWO_PI / (50 * fmax):
            dt = TWO_PI / (wb * samples_per_period * int(np.ceil(50 * fmax / (wb * samples_per_period))))
        per = int(round(TWO_PI / (wb * dt)))
        n_rec = 1 << int(np.ceil(np.log2(per * beat_periods)))
        n_use = per * beat_periods
        tones = ToneSet((A, probe_ratio * A), (D, d))
        n_settle = int(np.ceil(settle / dt))
        tr = integrate_eom(sys, tones, duration=(n_settle + n_rec) * dt, dt=dt, n_record=n_rec,
                           initial=(a_s, b_s))
        t = tr.t[-n_use:]
        y = tr.output()[-n_use:]
        out[i] = np.mean(y * np.exp(1j * d * t)) / (probe_ratio * A)
    return out


@dataclass(frozen=True)
class Tooth:
    n: int
    freq_hz: float
    power_db: float


@dataclass(frozen=True)
class CombSpectrum:
    """Power spectral density of a trace and its detected comb teeth.

    Frequencies in Hz relative to the frame frequency; a component
    exp(-i 2pi f t) appears at +f. Powers are in dB relative to one unit of
    |amplitude|^2, normalized so that a pure tone of amplitude A carries
    |A|^2 summed over its main lobe.
    """

    freq_hz: np.ndarray
    psd_db: np.ndarray
    teeth: tuple
    bin_hz: float
    spacing_hz: float = float("nan")

    @property
    def tooth_count(self) -> int:
        return len(self.teeth)

    def spacing_uniform(self) -> bool:
        """All adjacent teeth separated by the same spacing within one bin."""
        if len(self.teeth) < 2:
            return True
        f = np.array([t.freq_hz for t in self.teeth])
        ref = self.spacing_hz if np.isfinite(self.spacing_hz) else np.median(np.diff(f))
        return bool(np.all(np.abs(np.diff(f) - ref) <= self.bin_hz * (1 + 1e-9)))


def _psd(z: np.ndarray, dt: float, window: str):
    m = z.size
    w = get_window(window, m, fftbins=True)
    X = np.fft.fft(z * w)
    p = (np.abs(X) ** 2) / (m * np.sum(w * w))
    f = -np.fft.fftfreq(m, dt)
    order = np.argsort(f, kind="stable")
    return f[order], p[order]


def _lobe_power(p: np.ndarray, idx: int, half: int = 2) -> float:
    lo = max(idx - half, 0)
    return float(np.sum(p[lo: idx + half + 1]))


def comb_spectrum(trace: TimeTrace, window: str = "hann", signal: str = "a", discard: float = 0.25,
                  threshold_db: float = 6.0, dynamic_range_db: float = 60.0,
                  spacing_hz: Optional[float] = None, guard_bins: Optional[int] = None,
                  check_settled: bool = True, settle_tol_db: float = 3.0) -> CombSpectrum:
    """Windowed FFT of a trace with comb-tooth detection.

    Teeth are local maxima higher than both the median floor plus
    ``threshold_db`` and the strongest line minus ``dynamic_range_db``. Tooth
    power sums the window main lobe. Indices are ``round(f/spacing)``, with the
    spacing from ``spacing_hz``, the trace's omega_m, or the median gap.

    Raises
    ------
    TransientNotSettledError
        Tooth powers of the two halves of the analyzed segment differ by more
        than ``settle_tol_db``.
    """
    if signal == "output":
        z = trace.output()
    else:
        z = getattr(trace, signal)
    n0 = int(round(discard * z.size))
    seg = z[n0:]
    if seg.size < 16:
        raise ConfigError("trace too short for a spectrum")
    f, p = _psd(seg, trace.dt, window)
    df = 1.0 / (seg.size * trace.dt)
    if spacing_hz is None and "omega_m" in trace.metadata:
        spacing_hz = trace.metadata["omega_m"] / TWO_PI
    psd_db = 10 * np.log10(p + 1e-300)
    floor = float(np.median(psd_db))
    top = float(psd_db.max())
    thr = max(floor + threshold_db, top - dynamic_range_db)
    if guard_bins is None:
        guard_bins = 16 if spacing_hz is None else max(3, int(0.5 * spacing_hz / df))
    peaks, _ = find_peaks(np.concatenate([[-np.inf], psd_db, [-np.inf]]), height=thr, distance=guard_bins)
    peaks = peaks - 1
    freqs = f[peaks]
    if spacing_hz is None:
        spacing_hz = float(np.median(np.diff(freqs))) if peaks.size > 1 else float("nan")
    teeth = []
    for i in peaks:
        n = int(np.round(f[i] / spacing_hz)) if np.isfinite(spacing_hz) else 0
        teeth.append(Tooth(n=n, freq_hz=float(f[i]), power_db=float(10 * np.log10(_lobe_power(p, i) + 1e-300))))
    if check_settled and teeth and seg.size >= 64:
        h = seg.size // 2
        fa, pa = _psd(seg[:h], trace.dt, window)
        fb, pb = _psd(seg[h: 2 * h], trace.dt, window)
        clip = 10 ** ((top - dynamic_range_db) / 10)
        for tooth in teeth:
            k = int(np.argmin(np.abs(fa - tooth.freq_hz)))
            da = 10 * np.log10(max(_lobe_power(pa, k), clip))
            db = 10 * np.log10(max(_lobe_power(pb, k), clip))
            if abs(da - db) > settle_tol_db:
                raise TransientNotSettledError(
                    f"tooth at {tooth.freq_hz:.6g} Hz changes by {abs(da - db):.2f} dB across the record")
    return CombSpectrum(freq_hz=f, psd_db=psd_db, teeth=tuple(teeth), bin_hz=df, spacing_hz=float(spacing_hz))


def bessel_j(n_max: int, z: float) -> np.ndarray:
    """J_0(z) ... J_{n_max}(z) (scipy.special.jv)."""
    n_max = int(n_max)
    if n_max < 0:
        raise ConfigError("n_max must be non-negative")
    return jv(np.arange(n_max + 1), float(z))


def phase_modulation_sidebands(zeta: float, n):
    """Jacobi-Anger coefficients (-i)^n J_n(zeta) of exp(-i zeta cos(theta)).

    Raises
    ------
    TruncationBoundError
        Any |n| above 50.
    """
    n_arr = np.asarray(n)
    if np.any(np.abs(n_arr) > MAX_SIDEBAND):
        raise TruncationBoundError(f"sideband index beyond +-{MAX_SIDEBAND}")
    if np.any(n_arr != np.round(n_arr)):
        raise ConfigError("sideband index must be an integer")
    n_int = n_arr.astype(int)
    j = bessel_j(MAX_SIDEBAND, zeta)
    mag = j[np.abs(n_int)] * np.where((n_int < 0) & (n_int % 2 == 1), -1.0, 1.0)
    return (-1j) ** (n_int % 4) * mag


def phase_modulated_trace(zeta: float, omega_m: float, n_samples: int, samples_per_period: int = 128,
                          amplitude: complex = 1.0) -> TimeTrace:
    """Synthetic trace a(t) = A exp(-i zeta cos(w_m t)) on an integer-period grid."""
    dt = TWO_PI / (omega_m * samples_per_period)
    t = dt * np.arange(n_samples)
    a = amplitude * np.exp(-1j * zeta * np.cos(omega_m * t))
    return TimeTrace(dt=dt, a=a, b=np.zeros_like(a), metadata={"omega_m": omega_m})


@dataclass(frozen=True)
class LissajousResult:
    """Period-folded I/Q orbits. ``orbit`` has shape (n_periods, period_samples)."""

    orbit: np.ndarray
    period_samples: int
    period_s: float
    closure: float
    lags: np.ndarray = field(repr=False, default=None)
    closure_curve: np.ndarray = field(repr=False, default=None)

    @property
    def iq(self) -> np.ndarray:
        """Orbit as (n_periods, period_samples, 2) in-phase/quadrature pairs."""
        return np.stack([self.orbit.real, self.orbit.imag], axis=-1)


def _closure(z: np.ndarray, lag: int) -> float:
    r = np.mean(np.abs(z - np.mean(z)))
    if r == 0:
        return 0.0
    return float(np.mean(np.abs(z[lag:] - z[:-lag])) / r)


def lissajous(trace: TimeTrace, demod_freq: float = 0.0, signal: str = "a",
              lag_range: Optional[tuple] = None, max_samples: int = 1 << 16) -> LissajousResult:
    """Fold demodulated I/Q data by the period that best closes the orbit.

    ``z = s(t) exp(i demod_freq t)`` is compared with itself shifted by each
    candidate lag; the closure metric is the mean distance between successive
    folded orbits normalized by the mean orbit radius. The lag search spans
    half to one and a half of the trace's mechanical period when it is known,
    otherwise 2 to 1/10 of the (capped) record; ties resolve to the smallest
    lag within 5% of the minimum that is a local minimum.
    """
    z = getattr(trace, signal) * np.exp(1j * demod_freq * trace.t)
    if demod_freq and z.size * trace.dt < 10 * TWO_PI / abs(demod_freq):
        warnings.warn("trace shorter than 10 demodulation periods", ValidityWarning, stacklevel=2)
    z = z[-max_samples:]
    if lag_range is None:
        wm = trace.metadata.get("omega_m")
        if wm:
            p0 = TWO_PI / (wm * trace.dt)
            lag_range = (max(2, int(0.5 * p0)), int(np.ceil(1.5 * p0)))
        else:
            lag_range = (2, max(3, z.size // 10))
    lags = np.arange(lag_range[0], min(lag_range[1], z.size // 2) + 1)
    if lags.size == 0:
        raise ConfigError("trace too short for the lag search")
    curve = np.array([_closure(z, int(L)) for L in lags])
    cmin = curve.min()
    best = int(np.argmin(curve))
    for i in range(curve.size):
        left = curve[i - 1] if i > 0 else np.inf
        right = curve[i + 1] if i + 1 < curve.size else np.inf
        if curve[i] <= cmin * 1.05 + 1e-12 and curve[i] <= left and curve[i] <= right:
            best = i
            break
    L = int(lags[best])
    n_per = z.size // L
    orbit = z[z.size - n_per * L:].reshape(n_per, L)
    return LissajousResult(orbit=orbit, period_samples=L, period_s=L * trace.dt, closure=float(curve[best]),
                           lags=lags, closure_curve=curve)


def kerr_coefficient(sys: SystemParams) -> float:
    """Effective Kerr coefficient chi = -g_0^2/omega_m, g_0 = g_disp (rad/s).

    The static displacement under n intracavity quanta pulls the cavity by
    2*chi*n, the shift a chi a^dag a^dag a a term produces.
    """
    if not sys.omega_m > 0:
        raise ConfigError("omega_m must be positive")
    return -sys.g_disp ** 2 / sys.omega_m
