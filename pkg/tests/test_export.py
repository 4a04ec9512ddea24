import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from acoustomech.errors import ConfigError
from acoustomech.export import (
    AMIT_COLUMNS,
    amit_csv,
    comb_csv,
    csv_text,
    json_text,
    read_amit,
    read_csv,
    read_s11,
    read_trace,
    s11_csv,
    teeth_json,
    trace_csv,
)
from acoustomech.nonlinear import TimeTrace, comb_spectrum, phase_modulated_trace
from acoustomech.spectrum import ComplexSpectrum

TWO_PI = 2 * np.pi
_f = st.floats(-1e6, 1e6, allow_nan=False)


@given(re=arrays(np.float64, 12, elements=_f), im=arrays(np.float64, 12, elements=_f))
def test_s11_round_trip_is_exact(re, im, tmp_path_factory):
    grid = TWO_PI * (1e9 + np.arange(12) * 1e3)
    spec = ComplexSpectrum(grid, re + 1j * im, convention="engineering")
    p = tmp_path_factory.mktemp("s") / "s11.csv"
    p.write_text(s11_csv(spec))
    back = read_s11(p)
    assert np.array_equal(back.values, spec.values)
    assert np.allclose(back.grid, grid, rtol=1e-15)
    assert back.convention == "engineering"


def test_amit_and_trace_round_trip(tmp_path):
    x = np.linspace(-10, 10, 21)
    v = np.exp(0.3j * x) * (1 + 0.1 * x)
    p = tmp_path / "amit.csv"
    p.write_text(amit_csv(ComplexSpectrum(x, v), np.full(21, 0.02)))
    assert list(read_csv(p)) == list(AMIT_COLUMNS)
    back = read_amit(p)
    assert np.array_equal(back.values, v) and back.convention == "physics"
    tr = TimeTrace(dt=1e-6, a=v, b=2 * v, t0=0.5)
    p = tmp_path / "trace.csv"
    p.write_text(trace_csv(tr))
    t, a, b = read_trace(p)
    assert np.array_equal(a, v) and np.array_equal(b, 2 * v)
    assert np.allclose(t, tr.t, rtol=1e-15)


def test_comb_outputs():
    c = comb_spectrum(phase_modulated_trace(1.0, TWO_PI * 1e3, 4096), spacing_hz=1e3)
    full = comb_csv(c).splitlines()
    part = comb_csv(c, span_hz=2.5e3).splitlines()
    assert full[0] == "freq_hz,psd_db"
    assert 1 < len(part) < len(full)
    teeth = json.loads(teeth_json(c))
    assert sorted(t["n"] for t in teeth) == sorted(t.n for t in c.teeth)


def test_csv_text_checks():
    assert csv_text(("a", "b"), [[1, 2], [0.5, 0.25]]) == "a,b\n1,0.5\n2,0.25\n"
    with pytest.raises(ConfigError):
        csv_text(("a",), [[1], [2]])
    with pytest.raises(ConfigError):
        csv_text(("a", "b"), [[1], [2, 3]])


def test_json_plain_values():
    obj = {"c": 1 + 2j, "n": np.int64(3), "f": np.float32(0.5), "bad": float("nan"), "inf": np.inf,
           "arr": np.arange(3), "flag": np.bool_(True), 2: (1, 2)}
    d = json.loads(json_text(obj))
    assert d["c"] == {"re": 1.0, "im": 2.0}
    assert d["n"] == 3 and d["f"] == 0.5 and d["flag"] is True
    assert d["bad"] == "nan" and d["inf"] == "inf"
    assert d["arr"] == [0, 1, 2] and d["2"] == [1, 2]
    assert json_text(obj) == json_text(dict(reversed(list(obj.items()))))


def test_read_errors(tmp_path):
    with pytest.raises(ConfigError):
        read_csv(tmp_path / "missing.csv")
    p = tmp_path / "x.csv"
    for text in ("", "a,b\n", "a,b\n1,x\n", "a,b\n1,2,3\n"):
        p.write_text(text)
        with pytest.raises(ConfigError):
            read_csv(p)
    p.write_text("omega_hz,re_s11\n1,2\n")
    with pytest.raises(ConfigError, match="im_s11"):
        read_s11(p)
