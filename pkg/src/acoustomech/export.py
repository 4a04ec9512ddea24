"""CSV and JSON writers/readers for spectra, traces, combs and fits.

Floats are written with ``repr`` so files round-trip exactly and identical
inputs give identical bytes. Frequencies in ``*_hz`` columns are ordinary
frequencies (rad/s divided by 2 pi); complex values are stored in the
convention of the producing spectrum (reflection S11 in the engineering
convention, probe response in the physics convention).
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .spectrum import ComplexSpectrum

__all__ = [
    "S11_COLUMNS",
    "AMIT_COLUMNS",
    "TRACE_COLUMNS",
    "COMB_COLUMNS",
    "csv_text",
    "s11_csv",
    "amit_csv",
    "trace_csv",
    "comb_csv",
    "teeth_json",
    "json_text",
    "read_csv",
    "read_s11",
    "read_amit",
    "read_trace",
]

TWO_PI = 2.0 * np.pi
S11_COLUMNS = ("omega_hz", "re_s11", "im_s11", "mag_db", "phase_rad")
AMIT_COLUMNS = ("delta_hz", "re_tp", "im_tp", "mag_db", "phase_rad", "tau_g_s")
TRACE_COLUMNS = ("t_s", "re_a", "im_a", "re_b", "im_b")
COMB_COLUMNS = ("freq_hz", "psd_db")


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, columns) -> str:
    """CSV text from a header and equal-length columns."""
    cols = [np.asarray(c) for c in columns]
    if len(cols) != len(header):
        raise ConfigError("header and column count differ")
    n = {c.shape[0] for c in cols}
    if len(n) > 1:
        raise ConfigError("columns differ in length")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*[c.tolist() for c in cols]):
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _mag_db(v):
    return 20.0 * np.log10(np.maximum(np.abs(v), 1e-300))


def s11_csv(spec: ComplexSpectrum) -> str:
    v = spec.values
    return csv_text(S11_COLUMNS, [spec.grid / TWO_PI, v.real, v.imag, _mag_db(v), np.angle(v)])


def amit_csv(spec: ComplexSpectrum, tau_g) -> str:
    v = spec.values
    return csv_text(AMIT_COLUMNS, [spec.grid / TWO_PI, v.real, v.imag, _mag_db(v), np.angle(v),
                                   np.asarray(tau_g, dtype=float)])


def trace_csv(trace) -> str:
    return csv_text(TRACE_COLUMNS, [trace.t, trace.a.real, trace.a.imag, trace.b.real, trace.b.imag])


def comb_csv(comb, span_hz=None) -> str:
    f, p = comb.freq_hz, comb.psd_db
    if span_hz is not None:
        keep = np.abs(f) <= span_hz
        f, p = f[keep], p[keep]
    return csv_text(COMB_COLUMNS, [f, p])


def json_text(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        o = float(o)
    if isinstance(o, float) and not np.isfinite(o):
        return repr(o)
    if isinstance(o, (complex, np.complexfloating)):
        return {"re": float(o.real), "im": float(o.imag)}
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def teeth_json(comb) -> str:
    return json_text([{"n": t.n, "freq_hz": t.freq_hz, "power_db": t.power_db} for t in comb.teeth])


def read_csv(path) -> dict:
    """Columns of a CSV file as float arrays keyed by the (stripped) header."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ConfigError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric cell ({exc})") from exc
    if data.size == 0:
        raise ConfigError(f"{path} has no data rows")
    if data.shape[1] != len(header):
        raise ConfigError(f"{path}: rows do not match the header")
    return {h: data[:, i] for i, h in enumerate(header)}


def _need(cols: dict, names, path):
    miss = [n for n in names if n not in cols]
    if miss:
        raise ConfigError(f"{path} lacks column(s) {', '.join(miss)}")


def read_s11(path) -> ComplexSpectrum:
    c = read_csv(path)
    _need(c, S11_COLUMNS[:3], path)
    return ComplexSpectrum(c["omega_hz"] * TWO_PI, c["re_s11"] + 1j * c["im_s11"], convention="engineering",
                           label=Path(path).stem)


def read_amit(path) -> ComplexSpectrum:
    c = read_csv(path)
    _need(c, AMIT_COLUMNS[:3], path)
    return ComplexSpectrum(c["delta_hz"] * TWO_PI, c["re_tp"] + 1j * c["im_tp"], convention="physics",
                           label=Path(path).stem)


def read_trace(path):
    """(t, a, b) arrays from a trace CSV."""
    c = read_csv(path)
    _need(c, TRACE_COLUMNS, path)
    return c["t_s"], c["re_a"] + 1j * c["im_a"], c["re_b"] + 1j * c["im_b"]
