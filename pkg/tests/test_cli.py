import json

import pytest

from acoustomech.cli import main
from acoustomech.runner import list_presets


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    assert capsys.readouterr().out.split() == list_presets()


def test_run_and_fit_round_trip(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "fit_amit", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert "data.csv" in summary["files"]
    res = tmp_path / "fit.json"
    assert main(["fit", "amit", str(out / "data.csv"), "fit_amit", "--out", str(res)]) == 0
    rec = json.loads(res.read_text())
    assert rec["estimate"]["ratio"] == pytest.approx(summary["summary"]["estimate"]["ratio"], rel=1e-6)


def test_fit_s11_from_sweep(tmp_path, capsys):
    out = tmp_path / "s11"
    assert main(["run", "fig2a", "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["fit", "s11", str(out / "s11.csv"), "fig2a"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["estimate_hz"]["kappa_in"] == pytest.approx(72.5e3, rel=5e-3)


def test_set_and_seed(tmp_path, capsys):
    out = tmp_path / "r"
    assert main(["run", "fig3", "--out", str(out), "--set", "grid.half_width=4", "--seed", "9"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 9 and man["options"]["grid"]["half_width"] == 4


def test_check_couplings(capsys):
    assert main(["check", "couplings", "fig2a"]) == 0
    lines = dict(l.split() for l in capsys.readouterr().out.splitlines())
    assert float(lines["beta"]) > 0 and float(lines["network"]) > 0


def test_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[scenario]\nkind = amit\n[system]\ngamma_m = -1\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["run", "fig3", "--out", str(tmp_path / "o"), "--set", "nonsense"]) == 2
    assert main(["fit", "ringdown", str(tmp_path / "missing.csv"), "fig2b"]) == 2
    assert main(["run", "fig2a", "--out", str(tmp_path / "p"), "--set", "fsr.thickness=-1"]) == 3
    with pytest.raises(SystemExit):
        main(["bogus"])
