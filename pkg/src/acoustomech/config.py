"""Scenario configuration files.

One sectioned key-value file per scenario (``configparser`` INI syntax)::

    [scenario]
    kind = amit
    label = power sweep

    [system]            # any SystemParams field; missing ones take the
    kappa_in_hz = 72.5e3 # reference-device values
    [drive]
    power_dbm = -5, 0, 3
    attenuation = 2.6e-8

Unit rules applied at parse time:

* a key ending in ``_hz`` holds an ordinary frequency and is stored as
  ``2*pi*value`` rad/s under the name without the suffix;
* a key ending in ``_dbm`` is converted to watt, ``10**((dBm - 30)/10)``;
* everything else is SI as written.

:func:`dump_config` writes the parsed SI values back with ``repr`` floats and
no unit suffixes, so parse -> dump -> parse reproduces every record bit for
bit.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .circuit import MbvdParams, OvertoneBranch, desk_params, membrane_zero_point
from .errors import AcoustomechError, ConfigError
from .linear_response import DriveConfig, SystemParams, dbm_to_watt, reference_system
from .nonlinear import TwoToneDrive

__all__ = ["KINDS", "ScenarioConfig", "parse_config", "load_config", "dump_config", "parse_value"]

KINDS = ("s11-sweep", "amit", "group-delay", "ringdown", "comb", "coupling-check", "fit")
TWO_PI = 2.0 * np.pi

_SYSTEM_KEYS = tuple(f.name for f in fields(SystemParams))
_CIRCUIT_KEYS = ("R_L", "R_0", "C_0", "Z_ref")
_MEMBRANE_KEYS = ("d_gap", "area", "permittivity", "x", "frozen")
_BRANCH_KEYS = ("L_au", "C_au", "R_au")
_DRIVE_KEYS = ("detuning", "power", "probe_amplitude", "attenuation")
_TONE_KEYS = ("P1", "P2", "phase", "attenuation", "sideband_loss", "detuning2")
_FIXED = ("scenario", "system", "circuit", "drive", "two_tone")


@dataclass(frozen=True)
class ScenarioConfig:
    """Parsed scenario file.

    ``drives`` and ``two_tone`` are tuples because a power key may list
    several values, one record per value. ``options`` holds every other
    section as ``{section: {key: value}}`` with values in file units.
    """

    kind: str
    system: SystemParams
    circuit: MbvdParams
    label: str = ""
    seed: Optional[int] = None
    drives: tuple = ()
    two_tone: tuple = ()
    options: dict = field(default_factory=dict)

    def option(self, section: str, key: str, default=None):
        return self.options.get(section, {}).get(key, default)

    def with_overrides(self, overrides: dict) -> "ScenarioConfig":
        """Apply ``{"section.key": value}`` overrides to the option sections."""
        opts = {s: dict(v) for s, v in self.options.items()}
        for k, v in overrides.items():
            if "." not in k:
                raise ConfigError(f"override {k!r} must look like section.key")
            sec, key = k.split(".", 1)
            if sec in _FIXED:
                raise ConfigError(f"override of [{sec}] is not supported; edit the file")
            opts.setdefault(sec, {})[key] = parse_value(v) if isinstance(v, str) else v
        return replace(self, options=opts)


def parse_value(text: str):
    """int, float, bool, comma-separated list of those, or the bare string."""
    s = text.strip()
    if "," in s:
        return [parse_value(p) for p in s.split(",") if p.strip()]
    low = s.lower()
    if low in ("yes", "true", "on"):
        return True
    if low in ("no", "false", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def _units(section) -> dict:
    """Values of one section with unit suffixes resolved."""
    out = {}
    for key, raw in section.items():
        v = parse_value(raw)
        name = key
        if key.endswith("_hz"):
            name = key[:-3]
            v = _scale(v, TWO_PI, key)
        elif key.endswith("_dbm"):
            name = key[:-4]
            v = _dbm(v, key)
        if name in out:
            raise ConfigError(f"{name!r} given twice (with and without a unit suffix)")
        out[name] = v
    return out


def _scale(v, k, key):
    if isinstance(v, list):
        return [_scale(x, k, key) for x in v]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be numeric, got {v!r}")
    return float(v) * k


def _dbm(v, key):
    if isinstance(v, list):
        return [_dbm(x, key) for x in v]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be numeric, got {v!r}")
    return float(dbm_to_watt(v))


def _num(v, key) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a single number, got {v!r}")
    return float(v)


def _as_list(v):
    return v if isinstance(v, list) else [v]


def _unknown(d: dict, allowed, section):
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(extra)}")


def _system(d: dict) -> SystemParams:
    d = dict(d)
    ratio = d.pop("coupling_ratio", None)
    _unknown(d, _SYSTEM_KEYS, "system")
    vals = {k: _num(v, k) for k, v in d.items()}
    if ratio is not None:
        if "g_disp" in vals:
            raise ConfigError("give either g_disp or coupling_ratio, not both")
        g_diss = vals.get("g_diss", reference_system().g_diss)
        vals["g_disp"] = _num(ratio, "coupling_ratio") * g_diss
    if "omega_m" in vals and "x_zpf" not in vals:
        vals["x_zpf"] = membrane_zero_point(vals["omega_m"])
    return reference_system(**vals)


def _circuit(top: dict, branches: list) -> MbvdParams:
    base = desk_params()
    _unknown(top, _CIRCUIT_KEYS + _MEMBRANE_KEYS, "circuit")
    mem = {k: top[k] for k in _MEMBRANE_KEYS if k in top}
    if "frozen" in mem and not isinstance(mem["frozen"], bool):
        raise ConfigError("frozen must be yes/no")
    mem = {k: (v if k == "frozen" else _num(v, k)) for k, v in mem.items()}
    membrane = replace(base.membrane, **mem)
    if branches:
        brs = []
        for i, b in branches:
            _unknown(b, _BRANCH_KEYS, f"branch.{i}")
            missing = [k for k in _BRANCH_KEYS if k not in b]
            if missing and len(branches) > 1:
                raise ConfigError(f"[branch.{i}] lacks {', '.join(missing)}")
            ref = base.branches[0]
            brs.append(OvertoneBranch(**{k: _num(b[k], k) if k in b else getattr(ref, k) for k in _BRANCH_KEYS}))
    else:
        brs = list(base.branches)
    kw = {k: _num(top[k], k) for k in _CIRCUIT_KEYS if k in top}
    return replace(base, membrane=membrane, branches=tuple(brs), **kw)


def _drives(d: dict, sys: SystemParams) -> tuple:
    if not d:
        return ()
    _unknown(d, _DRIVE_KEYS, "drive")
    if "power" not in d:
        raise ConfigError("[drive] needs power_dbm or power")
    det = _num(d.get("detuning", -sys.omega_m), "detuning")
    kw = {k: _num(d[k], k) for k in ("probe_amplitude", "attenuation") if k in d}
    return tuple(DriveConfig(detuning=det, power=_num(p, "power"), **kw) for p in _as_list(d["power"]))


def _tones(d: dict) -> tuple:
    if not d:
        return ()
    d = {("P1" if k == "p1" else "P2" if k == "p2" else k): v for k, v in d.items()}
    _unknown(d, _TONE_KEYS, "two_tone")
    if "P1" not in d or "P2" not in d:
        raise ConfigError("[two_tone] needs p1 and p2 (watt or _dbm)")
    kw = {k: _num(d[k], k) for k in ("phase", "attenuation", "sideband_loss", "detuning2") if k in d}
    p1 = _num(d["P1"], "p1")
    return tuple(TwoToneDrive(P1=p1, P2=_num(p, "p2"), **kw) for p in _as_list(d["P2"]))


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    return cp


def parse_config(text: str) -> ScenarioConfig:
    """Parse scenario text; raises :class:`ConfigError` on any problem."""
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from exc
    if not cp.has_section("scenario"):
        raise ConfigError("missing [scenario] section")
    sc = {k: parse_value(v) for k, v in cp["scenario"].items()}
    _unknown(sc, ("kind", "label", "seed"), "scenario")
    kind = sc.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown scenario kind {kind!r}; expected one of {', '.join(KINDS)}")
    seed = sc.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ConfigError("seed must be an integer")
    try:
        system = _system(_units(cp["system"]) if cp.has_section("system") else {})
        branches = []
        for s in cp.sections():
            if s.startswith("branch."):
                try:
                    idx = int(s.split(".", 1)[1])
                except ValueError:
                    raise ConfigError(f"branch section {s!r} needs an integer index") from None
                branches.append((idx, _units(cp[s])))
        branches.sort(key=lambda t: t[0])
        if [i for i, _ in branches] != list(range(len(branches))):
            raise ConfigError("branch sections must be numbered 0, 1, 2, ...")
        circuit = _circuit(_units(cp["circuit"]) if cp.has_section("circuit") else {}, branches)
        drives = _drives(_units(cp["drive"]) if cp.has_section("drive") else {}, system)
        tones = _tones(_units(cp["two_tone"]) if cp.has_section("two_tone") else {})
    except AcoustomechError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    options = {}
    for s in cp.sections():
        if s in _FIXED or s.startswith("branch."):
            continue
        options[s] = {k: parse_value(v) for k, v in cp[s].items()}
    label = sc.get("label", "")
    return ScenarioConfig(kind=kind, system=system, circuit=circuit, label=str(label), seed=seed,
                          drives=drives, two_tone=tones, options=options)


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_config(text)


def _fmt(v) -> str:
    if isinstance(v, list):
        return ", ".join(_fmt(x) for x in v) + ("," if len(v) == 1 else "")
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _common(records, names, section):
    out = {}
    for n in names:
        vals = {getattr(r, n) for r in records}
        if len(vals) != 1:
            raise ConfigError(f"[{section}] records differ in {n}; only the power may vary")
        out[n] = vals.pop()
    return out


def dump_config(cfg: ScenarioConfig) -> str:
    """Serialize to config text in SI units (no suffixes, repr floats)."""
    cp = _parser()
    cp["scenario"] = {"kind": cfg.kind}
    if cfg.label:
        cp["scenario"]["label"] = cfg.label
    if cfg.seed is not None:
        cp["scenario"]["seed"] = str(cfg.seed)
    cp["system"] = {k: _fmt(float(getattr(cfg.system, k))) for k in _SYSTEM_KEYS}
    c = cfg.circuit
    top = {k: _fmt(float(getattr(c, k))) for k in _CIRCUIT_KEYS}
    for k in _MEMBRANE_KEYS:
        v = getattr(c.membrane, k)
        top[k] = _fmt(v if isinstance(v, bool) else float(v))
    cp["circuit"] = top
    for i, b in enumerate(c.branches):
        cp[f"branch.{i}"] = {k: _fmt(float(getattr(b, k))) for k in _BRANCH_KEYS}
    if cfg.drives:
        d = {k: _fmt(float(v)) for k, v in _common(cfg.drives, ("detuning", "probe_amplitude", "attenuation"),
                                                     "drive").items()}
        d["power"] = _fmt([float(r.power) for r in cfg.drives])
        cp["drive"] = d
    if cfg.two_tone:
        names = ("P1", "phase", "attenuation", "sideband_loss", "detuning2")
        com = _common(cfg.two_tone, names, "two_tone")
        d = {("p1" if k == "P1" else k): _fmt(float(v)) for k, v in com.items() if v is not None}
        d["p2"] = _fmt([float(r.P2) for r in cfg.two_tone])
        cp["two_tone"] = d
    for s, vals in cfg.options.items():
        cp[s] = {k: _fmt(v) for k, v in vals.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
