"""Scenario orchestration: config in, CSV/JSON artifacts plus a manifest out.

Every scenario kind maps to one pipeline below. Outputs are collected in
memory and written only after the pipeline succeeds, so a failed run leaves
nothing but its manifest. The manifest lists every file with its SHA-256,
the input hash and the package version; it carries no timestamps, so a
fixed config and seed reproduce it byte for byte.
"""

from __future__ import annotations

import hashlib
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from . import export
from .circuit import (
    coupling_ratio,
    construct_desk_params,
    dissipative_coupling_strength,
    finite_difference_couplings,
    loading_parameters,
    mode_window,
    network_coupling_ratio,
    s11_spectrum,
)
from .config import KINDS, ScenarioConfig, load_config
from .errors import AcoustomechError, ConfigError, PhysicsDomainError, ValidityWarning
from .fitting import fit_amit_window, fit_reflection_mode, fit_ringdown, reflection_model
from .linear_response import (
    DriveConfig,
    amit_spectrum,
    dispersive_group_delay,
    dispersive_transmission,
    enhanced_couplings,
    effective_linewidth,
    group_delay,
    intracavity_amplitude,
    watt_to_dbm,
)
from .nonlinear import TimeTrace, comb_spectrum, integrate_eom, lissajous
from .spectrum import ComplexSpectrum

__all__ = [
    "ENV_THREADS",
    "Scenario",
    "RunResult",
    "run_scenario",
    "run_config",
    "fsr_check",
    "thread_count",
    "parallel_map",
    "fit_data",
    "coupling_report",
    "preset_path",
    "list_presets",
]

ENV_THREADS = "ACOUSTOMECH_THREADS"
TWO_PI = 2.0 * np.pi
PRESET_DIR = Path(__file__).parent / "presets"


def fsr_check(v: float, d: float) -> float:
    """Free spectral range v/(2d) in Hz of a substrate of thickness d."""
    if not (v > 0 and d > 0):
        raise PhysicsDomainError("sound speed and thickness must be positive")
    return v / (2.0 * d)


def thread_count() -> int:
    """Worker threads for sweeps; ``ACOUSTOMECH_THREADS`` overrides."""
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"{ENV_THREADS} must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"{ENV_THREADS} must be >= 1")
        return n
    return max(1, min(os.cpu_count() or 1, 8))


def parallel_map(fn: Callable, items, threads: Optional[int] = None) -> list:
    """Ordered map over independent runs on a thread pool."""
    items = list(items)
    n = thread_count() if threads is None else int(threads)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))


def list_presets() -> list:
    return sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))


def preset_path(name_or_path) -> Path:
    """A config path as given, or the shipped preset of that name."""
    p = Path(name_or_path)
    if p.exists():
        return p
    q = PRESET_DIR / f"{name_or_path}.cfg"
    if q.exists():
        return q
    raise ConfigError(f"no config file {p} and no preset named {name_or_path!r} "
                      f"(presets: {', '.join(list_presets())})")


@dataclass
class Scenario:
    """One run request.

    ``kind`` (optional) must agree with the config file. ``overrides`` map
    ``"section.key"`` to values for the option sections, for instance
    ``{"integration.duration": 0.1}``. ``seed`` replaces the config seed.
    """

    config_path: Path
    out_dir: Path
    kind: Optional[str] = None
    overrides: dict = field(default_factory=dict)
    seed: Optional[int] = None
    plots: bool = False


@dataclass
class RunResult:
    status: int
    manifest: dict
    error: Optional[str] = None


class _Outputs:
    def __init__(self):
        self.files = {}
        self.summary = {}

    def add(self, name: str, data):
        if name in self.files:
            raise RuntimeError(f"duplicate output {name}")
        self.files[name] = data.encode() if isinstance(data, str) else bytes(data)


def _tag(power_w: float) -> str:
    if power_w <= 0:
        return "off"
    s = f"{float(watt_to_dbm(power_w)):.4g}"
    return s.replace("-", "m").replace(".", "p") + "dBm"


def _dbm(p: float) -> float:
    return float(watt_to_dbm(p)) if p > 0 else float("-inf")


def _rng(cfg: ScenarioConfig):
    return np.random.default_rng(0 if cfg.seed is None else cfg.seed)


def _complex_noise(rng, level: float, n: int):
    if level <= 0:
        return np.zeros(n, dtype=complex)
    return level * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def _first_drive(cfg: ScenarioConfig) -> DriveConfig:
    if not cfg.drives:
        raise ConfigError(f"{cfg.kind} scenario needs a [drive] section")
    return cfg.drives[0]


# --- s11-sweep -----------------------------------------------------------

def _mode_record(mode, fit, branch):
    return {
        "branch": branch,
        "omega_res_hz": mode.omega_res / TWO_PI,
        "kappa_in_hz": mode.kappa_in / TWO_PI,
        "kappa_ex_hz": mode.kappa_ex / TWO_PI,
        "Q": mode.Q,
        "fit": fit.to_dict(),
    }


def _run_s11(cfg: ScenarioConfig, out: _Outputs, plots: bool):
    c = cfg.circuit
    span = float(cfg.option("grid", "span", 16.0))
    n = int(cfg.option("grid", "n_points", 1601))
    level = float(cfg.option("noise", "level", 0.0))
    rng = _rng(cfg)
    modes = []
    first = None
    for i in range(len(c.branches)):
        w = mode_window(c, branch=i, n_points=n, span=span)
        spec = s11_spectrum(c, w)
        if level > 0:
            spec = ComplexSpectrum(w, spec.values + _complex_noise(rng, level, w.size), convention="engineering")
        mode, fit = fit_reflection_mode(spec)
        modes.append(_mode_record(mode, fit, i))
        if first is None:
            first = spec
    start = cfg.option("grid", "start_hz")
    stop = cfg.option("grid", "stop_hz")
    if start is not None or stop is not None:
        if start is None or stop is None or not stop > start:
            raise ConfigError("[grid] needs both start_hz < stop_hz for a wide sweep")
        w = np.linspace(float(start), float(stop), n) * TWO_PI
        spec = s11_spectrum(c, w)
        if level > 0:
            spec = ComplexSpectrum(w, spec.values + _complex_noise(rng, level, w.size), convention="engineering")
    else:
        spec = first
    out.add("s11.csv", export.s11_csv(spec))
    out.add("modes.json", export.json_text(modes))
    summary = {"modes": [{k: m[k] for k in ("branch", "omega_res_hz", "kappa_in_hz", "kappa_ex_hz", "Q")}
                         for m in modes]}
    if "fsr" in cfg.options:
        v = float(cfg.option("fsr", "sound_speed"))
        d = float(cfg.option("fsr", "thickness"))
        f = fsr_check(v, d)
        rec = {"sound_speed": v, "thickness": d, "fsr_model_hz": f}
        meas = cfg.option("fsr", "measured_hz")
        if len(modes) > 1:
            meas = float(np.mean(np.diff(sorted(m["omega_res_hz"] for m in modes))))
        if meas is not None:
            rec["fsr_measured_hz"] = float(meas)
            rec["relative_deviation"] = abs(f - float(meas)) / float(meas)
        out.add("fsr.json", export.json_text(rec))
        summary["fsr"] = rec
    out.summary.update(summary)
    if plots:
        from .plots import line_svg
        mag = 20 * np.log10(np.abs(spec.values))
        out.add("s11.svg", line_svg(spec.grid / TWO_PI / 1e9, [mag], "frequency (GHz)", "|S11| (dB)"))


# --- ringdown ------------------------------------------------------------

def _run_ringdown(cfg: ScenarioConfig, out: _Outputs, plots: bool):
    sys = cfg.system.replace(g_disp=0.0, g_diss=0.0)
    b0 = complex(float(cfg.option("ringdown", "initial_b", 1e4)))
    n_tau = float(cfg.option("ringdown", "duration_tau", 5.0))
    n_rec = int(cfg.option("ringdown", "n_record", 4096))
    tau_true = 2.0 / sys.gamma_m
    duration = float(cfg.option("integration", "duration", n_tau * tau_true))
    dt = TWO_PI / (128 * sys.omega_m)
    n_steps = int(round(duration / dt))
    stride = max(1, n_steps // (n_rec - 1))
    tr = integrate_eom(sys, None, duration=duration, dt=dt, n_record=n_rec, stride=stride, initial=(0j, b0))
    level = float(cfg.option("noise", "level", 0.0))
    b = tr.b + _complex_noise(_rng(cfg), level, tr.b.size)
    fitted = fit_ringdown(b, t=tr.t)
    out.add("ringdown.csv", export.trace_csv(TimeTrace(tr.dt, tr.a, b, tr.t0, tr.metadata)))
    rec = {
        "tau_s": fitted.tau,
        "gamma_m_hz": fitted.gamma_m / TWO_PI,
        "tau_expected_s": tau_true,
        "relative_error": abs(fitted.tau - tau_true) / tau_true,
        "fit": fitted.fit.to_dict(),
    }
    out.add("ringdown.json", export.json_text(rec))
    out.summary.update({k: rec[k] for k in ("tau_s", "gamma_m_hz", "relative_error")})
    if plots:
        from .plots import line_svg
        out.add("ringdown.svg", line_svg(tr.t * 1e3, [np.abs(b)], "time (ms)", "|b|", logy=True))


# --- amit / group delay --------------------------------------------------

def _amit_one(cfg: ScenarioConfig, drive: DriveConfig):
    hw = float(cfg.option("grid", "half_width", 10.0))
    ppl = float(cfg.option("grid", "points_per_linewidth", 40.0))
    spec = amit_spectrum(cfg.system, drive, half_width=hw, points_per_linewidth=ppl)
    tau = group_delay(spec)
    return spec, tau


def _amit_row(cfg, drive, spec, tau):
    md = spec.metadata
    i = int(np.argmax(tau))
    G_disp, G_diss = md["G_disp"], md["G_diss"]
    mag = np.abs(spec.values)
    return {
        "power_dbm": _dbm(drive.power),
        "gamma_eff_hz": md["gamma_eff"] / TWO_PI,
        "ratio": abs(G_disp) / abs(G_diss) if G_diss != 0 else float("inf"),
        "G_disp_hz": abs(G_disp) / TWO_PI,
        "tau_g_peak_s": float(tau[i]),
        "delta_peak_hz": float(spec.grid[i] / TWO_PI),
        "peak_mag": float(mag.max()),
        "baseline_mag": float(abs(1.0 - 2.0 * cfg.system.kappa_c / cfg.system.kappa)),
    }


def _run_amit(cfg: ScenarioConfig, out: _Outputs, plots: bool):
    if not cfg.drives:
        raise ConfigError("amit scenario needs a [drive] section")
    res = parallel_map(lambda d: _amit_one(cfg, d), cfg.drives)
    rows = []
    for drive, (spec, tau) in zip(cfg.drives, res):
        out.add(f"amit_{_tag(drive.power)}.csv", export.amit_csv(spec, tau))
        rows.append(_amit_row(cfg, drive, spec, tau))
    keys = ("power_dbm", "gamma_eff_hz", "ratio", "tau_g_peak_s", "delta_peak_hz", "peak_mag")
    out.add("tau_g.csv", export.csv_text(keys, [np.array([r[k] for r in rows]) for k in keys]))
    out.summary["powers"] = rows
    if plots:
        from .plots import line_svg
        labels = [f"{r['power_dbm']:g} dBm" for r in rows]
        xs = [s.grid / TWO_PI for s, _ in res]
        out.add("amit.svg", line_svg(xs, [np.abs(s.values) for s, _ in res], "probe detuning (Hz)", "|t_p|",
                                     labels=labels))
        out.add("tau_g.svg", line_svg(xs, [t * 1e3 for _, t in res], "probe detuning (Hz)", "tau_g (ms)",
                                      labels=labels))


def _run_group_delay(cfg: ScenarioConfig, out: _Outputs, plots: bool):
    drive = _first_drive(cfg)
    spec, tau = _amit_one(cfg, drive)
    sys = cfg.system
    row = _amit_row(cfg, drive, spec, tau)
    # closed-form check on the dispersive limit with the same |G_disp| and grid
    Gd = abs(spec.metadata["G_disp"])
    disp = ComplexSpectrum(spec.grid, dispersive_transmission(spec.grid, Gd, sys.kappa, sys.kappa_c, sys.gamma_m))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        num = group_delay(disp)
    ana = dispersive_group_delay(spec.grid, Gd, sys.kappa, sys.kappa_c, sys.gamma_m)
    row["dispersive_oracle_rel_error"] = float(np.max(np.abs(num - ana)) / np.max(np.abs(ana)))
    out.add("amit.csv", export.amit_csv(spec, tau))
    out.add("group_delay.json", export.json_text(row))
    out.summary.update(row)
    if plots:
        from .plots import line_svg
        out.add("group_delay.svg", line_svg(spec.grid / TWO_PI, [tau * 1e3], "probe detuning (Hz)", "tau_g (ms)"))


# --- comb ----------------------------------------------------------------

def _run_comb(cfg: ScenarioConfig, out: _Outputs, plots: bool):
    if not cfg.two_tone:
        raise ConfigError("comb scenario needs a [two_tone] section")
    sys = cfg.system
    duration = float(cfg.option("integration", "duration", 0.3))
    n_rec = int(cfg.option("integration", "n_record", 1 << 18))
    dt = cfg.option("integration", "dt")
    an = cfg.options.get("analysis", {})
    kw = dict(
        signal=str(an.get("signal", "a")),
        discard=float(an.get("discard", 0.25)),
        threshold_db=float(an.get("threshold_db", 6.0)),
        dynamic_range_db=float(an.get("dynamic_range_db", 60.0)),
        check_settled=bool(an.get("check_settled", True)),
    )
    span = float(an.get("export_span_hz", 16 * sys.omega_m / TWO_PI))
    keep_trace = bool(cfg.option("output", "trace", False))

    def one(tone):
        tr = integrate_eom(sys, tone, duration=duration, dt=None if dt is None else float(dt), n_record=n_rec)
        return tr, comb_spectrum(tr, **kw)

    res = parallel_map(one, cfg.two_tone)
    rows = []
    for tone, (tr, comb) in zip(cfg.two_tone, res):
        tag = _tag(tone.P2)
        out.add(f"comb_{tag}.csv", export.comb_csv(comb, span))
        out.add(f"teeth_{tag}.json", export.teeth_json(comb))
        if keep_trace:
            out.add(f"trace_{tag}.csv", export.trace_csv(tr))
        ns = [t.n for t in comb.teeth]
        rows.append({
            "p2_dbm": _dbm(tone.P2),
            "tooth_count": comb.tooth_count,
            "spacing_uniform": comb.spacing_uniform(),
            "n_min": min(ns) if ns else 0,
            "n_max": max(ns) if ns else 0,
            "bin_hz": comb.bin_hz,
        })
    keys = ("p2_dbm", "tooth_count", "n_min", "n_max")
    out.add("comb_sweep.csv", export.csv_text(keys, [np.array([r[k] for r in rows]) for k in keys]))
    tr_top = res[-1][0]
    lj = lissajous(tr_top, signal=kw["signal"] if kw["signal"] != "output" else "a")
    n_show = min(8, lj.orbit.shape[0])
    orb = lj.orbit[-n_show:]
    per = np.repeat(np.arange(n_show), lj.period_samples)
    smp = np.tile(np.arange(lj.period_samples), n_show)
    out.add("lissajous.csv", export.csv_text(("period", "sample", "i", "q"),
                                             [per, smp, orb.real.ravel(), orb.imag.ravel()]))
    lrec = {"p2_dbm": rows[-1]["p2_dbm"], "period_samples": lj.period_samples, "period_s": lj.period_s,
            "closure": lj.closure, "sample_dt_s": tr_top.dt}
    out.add("lissajous.json", export.json_text(lrec))
    counts = [r["tooth_count"] for r in rows]
    out.summary.update({
        "sweep": rows,
        "monotone": bool(all(b >= a for a, b in zip(counts, counts[1:]))),
        "lissajous": lrec,
    })
    if plots:
        from .plots import line_svg
        xs, ys, labels = [], [], []
        for r, (_, comb) in zip(rows, res):
            m = np.abs(comb.freq_hz) <= span
            xs.append(comb.freq_hz[m] / 1e6)
            ys.append(comb.psd_db[m])
            labels.append(f"P2 = {r['p2_dbm']:g} dBm")
        out.add("comb.svg", line_svg(xs, ys, "frequency offset (MHz)", "PSD (dB)", labels=labels))
        out.add("lissajous.svg", line_svg(list(orb.real), list(orb.imag), "I", "Q"))


# --- coupling check ------------------------------------------------------

def coupling_report(params, x_zpf: float = 1.0, method: str = "fit") -> dict:
    """Closed-form, first-order-network and finite-difference couplings of
    branch 0 of ``params``."""
    beta, eta = loading_parameters(params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        gd, gs = finite_difference_couplings(params, x_zpf=x_zpf, method=method)
        gs_closed = dissipative_coupling_strength(params, x_zpf=x_zpf)
        gs_closed_rl = dissipative_coupling_strength(params, x_zpf=x_zpf, include_port=False)
    fd = abs(gd / gs) if gs != 0 else float("inf")
    cf = float(coupling_ratio(beta, eta))
    nw = float(network_coupling_ratio(beta, eta))
    return {
        "beta": float(beta),
        "eta": float(eta),
        "closed_form": cf,
        "network": nw,
        "finite_difference": fd,
        "rel_err_closed": abs(cf - fd) / fd,
        "rel_err_network": abs(nw - fd) / fd,
        "g_disp_fd_hz": gd / TWO_PI,
        "g_diss_fd_hz": gs / TWO_PI,
        "g_diss_closed_hz": gs_closed / TWO_PI,
        "g_diss_closed_rl_hz": gs_closed_rl / TWO_PI,
    }


def _crossover(betas, ratios):
    """beta where log(ratio) crosses zero, by log-log interpolation."""
    lb, lr = np.log(betas), np.log(ratios)
    for i in range(len(lb) - 1):
        if lr[i] == 0:
            return float(betas[i])
        if lr[i] * lr[i + 1] < 0:
            f = lr[i] / (lr[i] - lr[i + 1])
            return float(np.exp(lb[i] + f * (lb[i + 1] - lb[i])))
    return None


def _run_couplings(cfg: ScenarioConfig, out: _Outputs, plots: bool):
    sw = cfg.options.get("sweep", {})
    betas = sw.get("beta", [0.3, 0.5, 1.0, 2.0, 3.0])
    betas = [float(b) for b in (betas if isinstance(betas, list) else [betas])]
    eta = float(sw.get("eta", 0.033))
    method = str(sw.get("method", "fit"))
    x_zpf = cfg.system.x_zpf

    def one(b):
        p = construct_desk_params(beta=b, eta=eta)
        return coupling_report(p, x_zpf=x_zpf, method=method)

    rows = parallel_map(one, betas)
    keys = ("beta", "eta", "closed_form", "network", "finite_difference", "rel_err_closed", "rel_err_network",
            "g_diss_fd_hz", "g_diss_closed_hz")
    out.add("couplings.csv", export.csv_text(keys, [np.array([r[k] for r in rows]) for k in keys]))
    rb = np.array([r["beta"] for r in rows])
    beta_star = 1.0 / (2.0 * (2.0 - eta))
    fd_cross = _crossover(rb, np.array([r["finite_difference"] for r in rows]))
    rec = {
        "eta": eta,
        "max_rel_err_closed": max(r["rel_err_closed"] for r in rows),
        "max_rel_err_network": max(r["rel_err_network"] for r in rows),
        "crossover_closed_beta": beta_star,
        "crossover_network_beta": (np.sqrt(5.0) - 2.0) / (1.0 - eta),
        "crossover_fd_beta": fd_cross,
        "crossover_rel_dev": None if fd_cross is None else abs(fd_cross - beta_star) / beta_star,
        "rows": rows,
    }
    out.add("couplings.json", export.json_text(rec))
    out.summary.update({k: v for k, v in rec.items() if k != "rows"})
    if plots:
        from .plots import line_svg
        out.add("couplings.svg", line_svg(rb, [[r[k] for r in rows] for k in ("closed_form", "network",
                                                                               "finite_difference")],
                                          "beta", "|g_disp/g_diss|", labels=["closed form", "network", "FD"],
                                          logy=True, marker="o"))


# --- synthetic fit -------------------------------------------------------

def _synthetic(cfg: ScenarioConfig, target: str, rng, level: float):
    """(data spectrum or trace tuple, truth dict); ``level`` is relative to full scale."""
    sys = cfg.system
    n = int(cfg.option("fit", "n_points", 801))
    if target == "reflection":
        k = sys.kappa
        w = sys.omega_au + np.linspace(-8, 8, n) * k
        v = reflection_model(w, sys.omega_au, sys.kappa_in, sys.kappa_c)
        spec = ComplexSpectrum(w, v + _complex_noise(rng, level, n), convention="physics")
        truth = {"omega_res": sys.omega_au, "kappa_in": sys.kappa_in, "kappa_ex": sys.kappa_c}
        return spec, truth
    if target == "ringdown":
        tau = 2.0 / sys.gamma_m
        t = np.linspace(0.0, 5 * tau, n)
        b = 1e4 * np.exp(-(sys.gamma_m / 2 + 1j * sys.omega_m) * t) + _complex_noise(rng, level * 1e4, n)
        return (t, b), {"tau": tau}
    if target == "amit":
        drive = _first_drive(cfg)
        spec = amit_spectrum(sys, drive, points_per_linewidth=float(cfg.option("fit", "points_per_linewidth", 40)))
        # noise relative to the data full scale, as for the other targets
        scale = float(np.max(np.abs(spec.values)))
        spec = ComplexSpectrum(spec.grid, spec.values + _complex_noise(rng, level * scale, spec.grid.size),
                               convention="physics", metadata=spec.metadata)
        c = enhanced_couplings(sys, intracavity_amplitude(sys, drive), drive.detuning)
        return spec, {"G_disp": abs(c.G_disp), "ratio": c.ratio}
    raise ConfigError(f"unknown fit target {target!r}; expected reflection, ringdown or amit")


def _fit_any(target: str, data, known):
    """Fit and return (estimates, stderr, FitResult, derived quantities)."""
    if target == "reflection":
        mode, fit = fit_reflection_mode(data)
        return ({"omega_res": mode.omega_res, "kappa_in": mode.kappa_in, "kappa_ex": mode.kappa_ex},
                {k: fit.stderr[k] for k in ("omega_res", "kappa_in", "kappa_ex")}, fit, {"Q": mode.Q})
    if target == "ringdown":
        t, b = data
        r = fit_ringdown(b, t=t)
        return {"tau": r.tau}, {"tau": r.fit.stderr["tau"]}, r.fit, {"gamma_m": r.gamma_m}
    if target == "amit":
        r = fit_amit_window(data, known)
        return ({"G_disp": abs(r.couplings.G_disp), "ratio": r.ratio},
                {"G_disp": r.fit.stderr["G_disp"], "ratio": r.ratio_stderr},
                r.fit, {"gamma_eff": r.gamma_eff})
    raise ConfigError(f"unknown fit target {target!r}")


def _data_csv(target: str, data, tau=None) -> str:
    if target == "reflection":
        return export.s11_csv(ComplexSpectrum(data.grid, np.conj(data.values), convention="engineering"))
    if target == "ringdown":
        t, b = data
        return export.trace_csv(TimeTrace(float(t[1] - t[0]), np.zeros_like(b), b, float(t[0])))
    return export.amit_csv(data, group_delay(data) if tau is None else tau)


def _run_fit(cfg: ScenarioConfig, out: _Outputs, plots: bool):
    target = str(cfg.option("fit", "target", "reflection"))
    level = float(cfg.option("fit", "noise", 0.0))
    trials = int(cfg.option("fit", "trials", 1))
    if trials < 1:
        raise ConfigError("[fit] trials must be >= 1")
    rng = _rng(cfg)
    rows = []
    first = None
    for i in range(trials):
        data, truth = _synthetic(cfg, target, rng, level)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est, err, fit, _ = _fit_any(target, data, cfg.system)
        row = {"trial": i}
        for k in truth:
            row[k] = est[k]
            if k in err:
                row[f"{k}_stderr"] = err[k]
                row[f"{k}_z"] = (est[k] - truth[k]) / err[k] if err[k] > 0 else (0.0 if est[k] == truth[k]
                                                                                   else float("inf"))
        rows.append(row)
        if first is None:
            first = (data, truth, est, fit)
    data, truth, est, fit = first
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out.add("data.csv", _data_csv(target, data))
    rec = {"target": target, "noise": level, "truth": truth, "estimate": est, "fit": fit.to_dict()}
    out.add("fit.json", export.json_text(rec))
    summary = {"target": target, "truth": truth, "estimate": est,
               "relative_error": {k: abs(est[k] - truth[k]) / abs(truth[k]) for k in truth}}
    if trials > 1:
        keys = list(rows[0].keys())
        out.add("trials.csv", export.csv_text(keys, [np.array([r[k] for r in rows]) for k in keys]))
        zk = [k for k in keys if k.endswith("_z")]
        summary["coverage_3sigma"] = {k[:-2]: float(np.mean([abs(r[k]) <= 3 for r in rows])) for k in zk}
    out.summary.update(summary)


def fit_data(kind: str, data_path, cfg: ScenarioConfig) -> dict:
    """Fit a measured CSV file (``fit`` CLI verb).

    ``kind`` is ``reflection`` (alias ``s11``; S11 CSV schema), ``ringdown``
    (trace schema, the ``b`` columns) or ``amit`` (probe-response schema,
    with cavity and mechanical rates from ``cfg``).
    """
    kind = "reflection" if kind == "s11" else kind
    if kind == "reflection":
        data = export.read_s11(data_path)
    elif kind == "ringdown":
        t, _, b = export.read_trace(data_path)
        data = (t, b)
    elif kind == "amit":
        data = export.read_amit(data_path)
    else:
        raise ConfigError(f"unknown fit kind {kind!r}; expected reflection, ringdown or amit")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        est, err, fit, extra = _fit_any(kind, data, cfg.system)
    rec = {"kind": kind, "estimate": est, "stderr": err, "fit": fit.to_dict()}
    if kind == "reflection":
        rec["Q"] = extra["Q"]
        rec["estimate_hz"] = {k: v / TWO_PI for k, v in est.items()}
    elif kind == "ringdown":
        rec["gamma_m_hz"] = extra["gamma_m"] / TWO_PI
    else:
        rec["gamma_eff_hz"] = extra["gamma_eff"] / TWO_PI
    return rec


_PIPELINES = {
    "s11-sweep": _run_s11,
    "amit": _run_amit,
    "group-delay": _run_group_delay,
    "ringdown": _run_ringdown,
    "comb": _run_comb,
    "coupling-check": _run_couplings,
    "fit": _run_fit,
}


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run_config(cfg: ScenarioConfig, out_dir, plots: bool = False, input_bytes: bytes = b"",
               source: str = "") -> RunResult:
    """Run a parsed config and write its artifacts to ``out_dir``."""
    if cfg.kind not in KINDS:
        raise ConfigError(f"unknown scenario kind {cfg.kind!r}")
    out_dir = Path(out_dir)
    out = _Outputs()
    status, error = 0, None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            _PIPELINES[cfg.kind](cfg, out, plots)
        except AcoustomechError as exc:
            status, error = exc.exit_code, f"{type(exc).__name__}: {exc}"
            out.files.clear()
    msgs = sorted({f"{w.category.__name__}: {w.message}" for w in caught
                   if not issubclass(w.category, (DeprecationWarning, PendingDeprecationWarning))})
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from exc
    files = []
    for name in sorted(out.files):
        data = out.files[name]
        (out_dir / name).write_bytes(data)
        files.append({"name": name, "sha256": _sha(data), "bytes": len(data)})
    manifest = {
        "software": "acoustomech",
        "version": __version__,
        "kind": cfg.kind,
        "label": cfg.label,
        "seed": cfg.seed,
        "config": source,
        "input_sha256": _sha(input_bytes),
        "options": cfg.options,
        "status": status,
        "error": error,
        "warnings": msgs,
        "files": files,
        "summary": out.summary,
    }
    (out_dir / "manifest.json").write_text(export.json_text(manifest))
    return RunResult(status=status, manifest=manifest, error=error)


def run_scenario(sc: Scenario) -> RunResult:
    """Load, override and run one scenario. Exit status 0 on success, 2/3/4
    for configuration, physics-domain and numerical failures."""
    try:
        path = preset_path(sc.config_path)
        raw = path.read_bytes()
        cfg = load_config(path)
        if sc.kind is not None and sc.kind != cfg.kind:
            raise ConfigError(f"scenario kind {sc.kind!r} does not match the config kind {cfg.kind!r}")
        if sc.overrides:
            cfg = cfg.with_overrides(sc.overrides)
        if sc.seed is not None:
            cfg = replace(cfg, seed=int(sc.seed))
    except AcoustomechError as exc:
        return RunResult(status=exc.exit_code, manifest={}, error=f"{type(exc).__name__}: {exc}")
    return run_config(cfg, sc.out_dir, plots=sc.plots, input_bytes=raw, source=path.name)
