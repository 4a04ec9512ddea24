"""Linear probe response of the pumped cavity-membrane system.

Conventions: time dependence e^{-i w t}; cavity susceptibility
chi_au(d) = 1/(kappa/2 - i d) and mechanical susceptibility
chi_m(d) = 1/(gamma_m/2 - i d), with d the probe detuning from the cavity and
the pump held at Delta = -omega_m so the mechanical resonance falls at d = 0.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, GridTooCoarseError, PhaseUnwrapWarning, ValidityWarning
from .spectrum import ComplexSpectrum

__all__ = [
    "HBAR",
    "SystemParams",
    "DriveConfig",
    "EnhancedCouplings",
    "ComplexSpectrum",
    "dbm_to_watt",
    "watt_to_dbm",
    "reference_system",
    "input_amplitude",
    "intracavity_amplitude",
    "enhanced_couplings",
    "couplings_from_ratio",
    "probe_transmission",
    "transmission_from_couplings",
    "dispersive_transmission",
    "bare_transmission",
    "dispersive_group_delay",
    "amit_spectrum",
    "effective_linewidth",
    "group_delay",
]

HBAR = 1.054571817e-34
TWO_PI = 2.0 * np.pi


def dbm_to_watt(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float)) + 30.0


@dataclass(frozen=True)
class SystemParams:
    """Reduced cavity-membrane parameters; every rate in rad/s."""

    omega_au: float
    kappa_in: float
    kappa_c: float
    omega_m: float
    gamma_m: float
    g_disp: float
    g_diss: float
    x_zpf: float = 1.0

    def __post_init__(self):
        for name in ("omega_au", "kappa_in", "kappa_c", "omega_m", "gamma_m", "x_zpf"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        for name in ("g_disp", "g_diss"):
            if not np.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    @property
    def kappa(self) -> float:
        """Total cavity linewidth at zero mean displacement."""
        return self.kappa_in + self.kappa_c

    @property
    def resolved_sideband(self) -> bool:
        return self.omega_m > self.kappa

    def replace(self, **kw) -> "SystemParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def reference_system(**overrides) -> SystemParams:
    """Parameter set of the reference device (2.7454 GHz mode, 571.5 kHz membrane).

    g_diss/2pi = 0.059 Hz and |g_disp/g_diss| = 0.8.
    """
    from .circuit import membrane_zero_point

    wm = TWO_PI * 571.5e3
    g_diss = TWO_PI * 0.059
    base = dict(
        omega_au=TWO_PI * 2.7454e9,
        kappa_in=TWO_PI * 72.5e3,
        kappa_c=TWO_PI * 72.93e3,
        omega_m=wm,
        gamma_m=TWO_PI * 8.68,
        g_disp=0.8 * g_diss,
        g_diss=g_diss,
        x_zpf=membrane_zero_point(wm),
    )
    base.update(overrides)
    return SystemParams(**base)


@dataclass(frozen=True)
class DriveConfig:
    """Pump settings. ``power`` in watt at the instrument, ``attenuation`` is
    the fraction of that power reaching the device."""

    detuning: float
    power: float
    probe_amplitude: float = 0.0
    attenuation: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.power) and self.power >= 0):
            raise ConfigError("pump power must be finite and non-negative")
        if not (0 < self.attenuation <= 1):
            raise ConfigError("attenuation must lie in (0, 1]")
        if not np.isfinite(self.detuning):
            raise ConfigError("detuning must be finite")

    @classmethod
    def from_dbm(cls, detuning: float, power_dbm: float, **kw) -> "DriveConfig":
        return cls(detuning=detuning, power=float(dbm_to_watt(power_dbm)), **kw)

    @property
    def power_dbm(self) -> float:
        return float(watt_to_dbm(self.power)) if self.power > 0 else -np.inf


@dataclass(frozen=True)
class EnhancedCouplings:
    """Pump-enhanced coupling rates (rad/s) and the intracavity amplitude."""

    G_disp: complex
    G_diss: complex
    abar: complex
    detuning: float

    @property
    def ratio(self) -> float:
        """|G_disp/G_diss|."""
        return abs(self.G_disp) / abs(self.G_diss) if self.G_diss != 0 else np.inf


def input_amplitude(sys: SystemParams, drive: DriveConfig) -> float:
    """Photon-flux amplitude sqrt(attenuation*P/(hbar w_d)), in sqrt(1/s)."""
    wd = sys.omega_au + drive.detuning
    return float(np.sqrt(drive.attenuation * drive.power / (HBAR * wd)))


def intracavity_amplitude(sys: SystemParams, drive: DriveConfig) -> complex:
    """Steady state a = alpha*a_in with alpha = sqrt(kappa_c)/(kappa/2 - i Delta).

    The input amplitude is taken real, which fixes the global phase.
    """
    alpha = np.sqrt(sys.kappa_c) / (sys.kappa / 2 - 1j * drive.detuning)
    return complex(alpha * input_amplitude(sys, drive))


def enhancement_factor(sys: SystemParams, detuning: float) -> complex:
    """G_diss/(g_diss*abar) = -i Delta/(2 kappa_c) + kappa_in/(4 kappa_c) + 1/4."""
    return -1j * detuning / (2 * sys.kappa_c) + sys.kappa_in / (4 * sys.kappa_c) + 0.25


def enhanced_couplings(sys: SystemParams, abar: complex, detuning: Optional[float] = None) -> EnhancedCouplings:
    """G_disp = g_disp*abar and G_diss = g_diss*(enhancement factor)*abar.

    ``detuning`` defaults to the red sideband, -omega_m.
    """
    detuning = -sys.omega_m if detuning is None else float(detuning)
    return EnhancedCouplings(
        G_disp=complex(sys.g_disp * abar),
        G_diss=complex(sys.g_diss * enhancement_factor(sys, detuning) * abar),
        abar=complex(abar),
        detuning=detuning,
    )


def couplings_from_ratio(sys: SystemParams, G_disp: float, ratio: float,
                         detuning: Optional[float] = None) -> EnhancedCouplings:
    """Couplings with |G_disp| given and |G_disp/G_diss| = ``ratio``.

    The relative phase is the one produced by real single-photon couplings;
    the intracavity amplitude is taken real.
    """
    detuning = -sys.omega_m if detuning is None else float(detuning)
    f = enhancement_factor(sys, detuning)
    G_diss = (G_disp / ratio) * f / abs(f) if ratio not in (0, np.inf) and np.isfinite(ratio) else 0.0
    abar = G_disp / sys.g_disp if sys.g_disp != 0 else np.nan
    return EnhancedCouplings(complex(G_disp), complex(G_diss), complex(abar), detuning)


def _check_anchor(sys: SystemParams, detuning: float):
    if abs(detuning + sys.omega_m) > 1e-3 * sys.omega_m:
        warnings.warn("probe response formula assumes the pump at Delta = -omega_m",
                      ValidityWarning, stacklevel=3)


def transmission_from_couplings(sys: SystemParams, c: EnhancedCouplings, delta,
                                kappa_ex: Optional[float] = None):
    """Probe response for given enhanced couplings.

    Fractions G_diss/G_disp always appear multiplied by |G_disp|, so they are
    evaluated through the unit phasor of G_disp and stay finite at G_disp = 0.
    """
    delta = np.asarray(delta, dtype=float)
    k = sys.kappa
    kex = sys.kappa_c if kappa_ex is None else kappa_ex
    D = c.detuning
    chi_au = 1.0 / (k / 2 - 1j * delta)
    chi_m = 1.0 / (sys.gamma_m / 2 - 1j * delta)
    chi_au0 = 1.0 / (k / 2 + 0j)
    aGd = abs(c.G_disp)
    u = c.G_disp / aGd if aGd > 0 else 1.0
    Gs = c.G_diss * np.conj(u)
    num = kex + abs(c.G_diss) * chi_m * sys.kappa_c / (2 * D) * (1j * aGd + Gs / (2 * D * np.conj(chi_au0)))
    den = 1.0 / chi_au + chi_m * (aGd ** 2 + (Gs / (2 * D * chi_au0)) ** 2)
    return 1.0 - num / den


def probe_transmission(sys: SystemParams, drive: DriveConfig, delta):
    """Probe reflection t_p(delta) under the pump ``drive``."""
    _check_anchor(sys, drive.detuning)
    c = enhanced_couplings(sys, intracavity_amplitude(sys, drive), drive.detuning)
    return transmission_from_couplings(sys, c, delta)


def dispersive_transmission(delta, G_disp: float, kappa: float, kappa_ex: float, gamma_m: float):
    """Purely dispersive induced transparency 1 - kappa_ex/(1/chi_au + |G|^2 chi_m)."""
    delta = np.asarray(delta, dtype=float)
    inv_chi_au = kappa / 2 - 1j * delta
    chi_m = 1.0 / (gamma_m / 2 - 1j * delta)
    return 1.0 - kappa_ex / (inv_chi_au + abs(G_disp) ** 2 * chi_m)


def dispersive_group_delay(delta, G_disp: float, kappa: float, kappa_ex: float, gamma_m: float):
    """Closed-form group delay of :func:`dispersive_transmission`, seconds.

    With t = 1 - kappa_ex/D, tau_g = d(arg t)/d(delta) = Im(t'/t) and
    t' = kappa_ex D'/D^2, D' = -i + i |G|^2 chi_m^2. Sign as in
    :func:`group_delay`.
    """
    delta = np.asarray(delta, dtype=float)
    chi_m = 1.0 / (gamma_m / 2 - 1j * delta)
    D = kappa / 2 - 1j * delta + abs(G_disp) ** 2 * chi_m
    dD = -1j + 1j * abs(G_disp) ** 2 * chi_m ** 2
    t = 1.0 - kappa_ex / D
    return np.imag(kappa_ex * dD / (D * D * t))


def bare_transmission(delta, kappa: float, kappa_ex: float):
    """Empty cavity 1 - kappa_ex/(kappa/2 - i delta)."""
    delta = np.asarray(delta, dtype=float)
    return 1.0 - kappa_ex / (kappa / 2 - 1j * delta)


def effective_linewidth(sys: SystemParams, c: EnhancedCouplings) -> float:
    """Backaction-modified mechanical linewidth in rad/s.

    gamma_eff = gamma_m + (4|G_disp|^2/kappa)(1 - |G_diss kappa_c/(2 G_disp Delta)|).
    Negative values (amplification side) are returned unclamped with a
    :class:`ValidityWarning`; at G_disp = 0 the bare gamma_m is returned, also
    with a warning.
    """
    if c.detuning == 0:
        raise ConfigError("effective linewidth needs a non-zero pump detuning")
    aGd = abs(c.G_disp)
    if aGd == 0:
        warnings.warn("G_disp = 0: effective linewidth reported as gamma_m", ValidityWarning, stacklevel=2)
        return float(sys.gamma_m)
    corr = 1.0 - abs(c.G_diss * sys.kappa_c / (2 * c.G_disp * c.detuning))
    g = sys.gamma_m + 4 * aGd ** 2 / sys.kappa * corr
    if g <= 0:
        warnings.warn("negative effective linewidth: amplification regime", ValidityWarning, stacklevel=2)
    return float(g)


def amit_spectrum(sys: SystemParams, drive: Optional[DriveConfig] = None, grid=None,
                  couplings: Optional[EnhancedCouplings] = None, half_width: float = 10.0,
                  points_per_linewidth: float = 40.0, label: str = "amit") -> ComplexSpectrum:
    """Probe response sampled across the mechanical window.

    Either a ``drive`` or explicit ``couplings`` defines the pump. Without an
    explicit ``grid`` the detuning span is +-``half_width`` effective
    linewidths sampled at ``points_per_linewidth``.

    Raises
    ------
    GridTooCoarseError
        Fewer than 20 points per effective linewidth.
    """
    if couplings is None:
        if drive is None:
            raise ConfigError("amit_spectrum needs a drive or couplings")
        _check_anchor(sys, drive.detuning)
        couplings = enhanced_couplings(sys, intracavity_amplitude(sys, drive), drive.detuning)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        g_eff = effective_linewidth(sys, couplings)
    width = abs(g_eff) if g_eff != 0 else sys.gamma_m
    if grid is None:
        n = int(np.ceil(2 * half_width * points_per_linewidth)) + 1
        grid = np.linspace(-half_width * width, half_width * width, n)
    grid = np.asarray(grid, dtype=float)
    step = (grid[-1] - grid[0]) / (grid.size - 1)
    if step > width / 20:
        raise GridTooCoarseError(f"grid step {step:g} rad/s exceeds gamma_eff/20 = {width / 20:g}")
    if grid[0] > -10 * width or grid[-1] < 10 * width:
        warnings.warn("grid spans less than +-10 effective linewidths", ValidityWarning, stacklevel=2)
    values = transmission_from_couplings(sys, couplings, grid)
    meta = {
        "G_disp": couplings.G_disp,
        "G_diss": couplings.G_diss,
        "abar": couplings.abar,
        "detuning": couplings.detuning,
        "gamma_eff": g_eff,
    }
    if drive is not None:
        meta.update(power_w=drive.power, attenuation=drive.attenuation)
    return ComplexSpectrum(grid, values, convention="physics", label=label, metadata=meta)


def group_delay(spectrum: ComplexSpectrum) -> np.ndarray:
    """Group delay tau_g = -d(phi)/d(delta) in seconds.

    phi is the measured phase in the engineering (e^{+j w t}) convention, the
    one in which a delayed signal has a positive tau_g; physics-convention
    values are conjugated first. The phase is unwrapped and differentiated with
    second-order central differences, one-sided at the ends. A
    :class:`PhaseUnwrapWarning` flags adjacent samples still more than pi/2
    apart after unwrapping.
    """
    v = spectrum.values if spectrum.convention == "engineering" else np.conj(spectrum.values)
    phi = np.unwrap(np.angle(v))
    if np.any(np.abs(np.diff(phi)) > np.pi / 2):
        warnings.warn("phase jumps exceed pi/2 between samples; group delay ambiguous",
                      PhaseUnwrapWarning, stacklevel=2)
    return -np.gradient(phi, spectrum.grid, edge_order=2)
