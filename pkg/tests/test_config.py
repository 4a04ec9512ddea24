import numpy as np
import pytest
from hypothesis import given, strategies as st

from acoustomech.circuit import desk_params
from acoustomech.config import dump_config, load_config, parse_config, parse_value
from acoustomech.errors import ConfigError
from acoustomech.linear_response import reference_system
from acoustomech.runner import list_presets, preset_path

TWO_PI = 2 * np.pi


def test_parse_value():
    assert parse_value(" 3 ") == 3
    assert parse_value("2.5e-3") == 2.5e-3
    assert parse_value("yes") is True and parse_value("Off") is False
    assert parse_value("1, 2.5, no") == [1, 2.5, False]
    assert parse_value("4,") == [4]
    assert parse_value("hann") == "hann"


def test_defaults_are_reference_and_desk_sets():
    cfg = parse_config("[scenario]\nkind = amit\n")
    assert cfg.system == reference_system()
    assert cfg.circuit == desk_params()
    assert cfg.drives == () and cfg.seed is None


def test_unit_suffixes():
    cfg = parse_config("""
[scenario]
kind = amit
seed = 4
[system]
omega_m_hz = 571.5e3
gamma_m_hz = 10
[drive]
power_dbm = 0, 3
attenuation = 1e-7
""")
    assert cfg.system.omega_m == pytest.approx(TWO_PI * 571.5e3)
    assert cfg.system.gamma_m == pytest.approx(TWO_PI * 10)
    assert [d.power for d in cfg.drives] == pytest.approx([1e-3, 10 ** 0.3 * 1e-3])
    assert cfg.drives[0].detuning == cfg.system.omega_m * -1
    assert cfg.seed == 4


def test_coupling_ratio_sets_g_disp():
    cfg = parse_config("[scenario]\nkind = amit\n[system]\ncoupling_ratio = 0.5\ng_diss = 2.0\n")
    assert cfg.system.g_disp == 1.0
    with pytest.raises(ConfigError):
        parse_config("[scenario]\nkind = amit\n[system]\ncoupling_ratio = 0.5\ng_disp = 1\n")


@pytest.mark.parametrize("text", [
    "",
    "[system]\nomega_m = 1\n",
    "[scenario]\nkind = nope\n",
    "[scenario]\nkind = amit\nseed = 1.5\n",
    "[scenario]\nkind = amit\ncolour = red\n",
    "[scenario]\nkind = amit\n[system]\nbogus = 1\n",
    "[scenario]\nkind = amit\n[system]\nomega_m = 1\nomega_m_hz = 1\n",
    "[scenario]\nkind = amit\n[system]\ngamma_m = fast\n",
    "[scenario]\nkind = amit\n[system]\ngamma_m_hz = a\n",
    "[scenario]\nkind = amit\n[system]\ngamma_m = -1\n",
    "[scenario]\nkind = amit\n[drive]\nattenuation = 1e-7\n",
    "[scenario]\nkind = amit\n[drive]\npower = 1e-3\nattenuation = 2\n",
    "[scenario]\nkind = comb\n[two_tone]\np1 = 1e-3\n",
    "[scenario]\nkind = s11-sweep\n[circuit]\nfrozen = 3\n",
    "[scenario]\nkind = s11-sweep\n[branch.1]\nL_au = 1\n",
    "[scenario]\nkind = s11-sweep\n[branch.x]\nL_au = 1\n",
    "[scenario]\nkind = s11-sweep\n[branch.0]\nL_au = 1\n[branch.1]\nC_au = 1\n",
    "[scenario\nkind = amit\n",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.cfg")


def test_overrides():
    cfg = load_config(preset_path("fig3"))
    new = cfg.with_overrides({"grid.half_width": "4", "analysis.window": "hann"})
    assert new.option("grid", "half_width") == 4
    assert new.option("analysis", "window") == "hann"
    assert cfg.option("grid", "half_width") == 10
    with pytest.raises(ConfigError):
        cfg.with_overrides({"drive.power": "1"})
    with pytest.raises(ConfigError):
        cfg.with_overrides({"half_width": "1"})


@pytest.mark.parametrize("name", list_presets())
def test_presets_round_trip(name):
    cfg = load_config(preset_path(name))
    assert parse_config(dump_config(cfg)) == cfg
    assert dump_config(parse_config(dump_config(cfg))) == dump_config(cfg)


_pos = st.floats(1e-3, 1e12, allow_nan=False, allow_infinity=False)


@given(_pos, _pos, st.lists(st.floats(-30, 30), min_size=1, max_size=4), st.floats(1e-9, 1.0),
       st.integers(0, 2 ** 31))
def test_round_trip_property(omega_m, gamma_m, powers, att, seed):
    text = f"""
[scenario]
kind = group-delay
seed = {seed}
[system]
omega_m = {omega_m!r}
gamma_m = {gamma_m!r}
[drive]
power_dbm = {", ".join(repr(p) for p in powers)},
attenuation = {att!r}
[grid]
half_width = 6
"""
    cfg = parse_config(text)
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert len(again.drives) == len(powers)
