import json

import numpy as np
import pytest

from acoustomech import runner
from acoustomech.config import load_config, parse_config
from acoustomech.errors import ConfigError, PhysicsDomainError
from acoustomech.export import read_csv
from acoustomech.runner import (
    Scenario,
    fsr_check,
    list_presets,
    parallel_map,
    preset_path,
    run_config,
    run_scenario,
    thread_count,
)

SHORT_COMB = {"integration.duration": 0.01, "integration.n_record": 8192, "analysis.check_settled": False}
OVERRIDES = {"fig4b": SHORT_COMB, "fig2b": {"ringdown.duration_tau": 0.5, "ringdown.n_record": 512}}


def _run(name, out, **kw):
    return run_scenario(Scenario(config_path=name, out_dir=out, overrides=OVERRIDES.get(name, {}), **kw))


def test_fsr_check():
    assert fsr_check(1.04e4, 250e-6) == pytest.approx(20.8e6)
    assert fsr_check(1.04e4, 500e-6) == pytest.approx(10.4e6)
    assert fsr_check(2.0, 1.0) == 1.0
    for v, d in ((0.0, 1.0), (1.0, -1.0)):
        with pytest.raises(PhysicsDomainError):
            fsr_check(v, d)


def test_thread_count(monkeypatch):
    monkeypatch.setenv(runner.ENV_THREADS, "3")
    assert thread_count() == 3
    monkeypatch.setenv(runner.ENV_THREADS, "0")
    with pytest.raises(ConfigError):
        thread_count()
    monkeypatch.setenv(runner.ENV_THREADS, "many")
    with pytest.raises(ConfigError):
        thread_count()
    monkeypatch.delenv(runner.ENV_THREADS)
    assert 1 <= thread_count() <= 8


def test_parallel_map_keeps_order():
    items = list(range(20))
    assert parallel_map(lambda x: x * x, items, threads=4) == [x * x for x in items]
    assert parallel_map(lambda x: x + 1, items, threads=1) == [x + 1 for x in items]


def test_preset_lookup(tmp_path):
    assert preset_path("fig3").name == "fig3.cfg"
    p = tmp_path / "mine.cfg"
    p.write_text("[scenario]\nkind = amit\n")
    assert preset_path(p) == p
    with pytest.raises(ConfigError):
        preset_path("no-such-preset")


@pytest.mark.parametrize("name", list_presets())
def test_every_preset_runs(name, tmp_path):
    res = _run(name, tmp_path)
    assert res.status == 0, res.error
    man = json.loads((tmp_path / "manifest.json").read_text())
    listed = {f["name"] for f in man["files"]}
    on_disk = {p.name for p in tmp_path.iterdir()} - {"manifest.json"}
    assert listed == on_disk
    assert man["kind"] == load_config(preset_path(name)).kind
    for f in listed:
        if f.endswith(".csv"):
            cols = read_csv(tmp_path / f)
            assert all(np.all(np.isfinite(c)) for c in cols.values())


def test_runs_are_deterministic(tmp_path):
    for name in ("fit_amit", "fig3"):
        a, b = tmp_path / f"{name}_a", tmp_path / f"{name}_b"
        _run(name, a)
        _run(name, b)
        for p in sorted(a.iterdir()):
            assert p.read_bytes() == (b / p.name).read_bytes(), p.name


def test_seed_changes_noisy_outputs(tmp_path):
    _run("fit_amit", tmp_path / "a", seed=1)
    _run("fit_amit", tmp_path / "b", seed=2)
    assert (tmp_path / "a" / "data.csv").read_bytes() != (tmp_path / "b" / "data.csv").read_bytes()
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 1


def test_amit_outputs(tmp_path):
    res = _run("fig3", tmp_path)
    rows = res.manifest["summary"]["powers"]
    assert [round(r["power_dbm"], 6) for r in rows] == [-5, 0, 3, 6]
    assert rows[2]["gamma_eff_hz"] == pytest.approx(9.0, abs=0.05)
    assert (tmp_path / "amit_3dBm.csv").exists() and (tmp_path / "amit_m5dBm.csv").exists()
    tau = read_csv(tmp_path / "tau_g.csv")
    assert tau["tau_g_peak_s"][2] == pytest.approx(rows[2]["tau_g_peak_s"])


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[scenario]\nkind = nothing\n")
    assert run_scenario(Scenario(config_path=bad, out_dir=tmp_path / "o")).status == 2
    assert run_scenario(Scenario(config_path="fig3", out_dir=tmp_path / "o", kind="comb")).status == 2
    res = run_scenario(Scenario(config_path="fig2a", out_dir=tmp_path / "p",
                                overrides={"fsr.thickness": -1.0}))
    assert res.status == 3
    man = json.loads((tmp_path / "p" / "manifest.json").read_text())
    assert man["files"] == [] and man["status"] == 3 and "PhysicsDomain" in man["error"]
    res = run_scenario(Scenario(config_path="fig4b", out_dir=tmp_path / "q",
                                overrides=dict(SHORT_COMB, **{"integration.dt": 1e-6})))
    assert res.status == 4
    assert "StepTooLarge" in res.error


def test_missing_sections_are_config_errors(tmp_path):
    for kind in ("amit", "comb", "group-delay"):
        res = run_config(parse_config(f"[scenario]\nkind = {kind}\n"), tmp_path / kind)
        assert res.status == 2


def test_noisy_fit_trials(tmp_path):
    cfg = parse_config("[scenario]\nkind = fit\nseed = 3\n[fit]\ntarget = reflection\nnoise = 5e-3\ntrials = 20\n")
    res = run_config(cfg, tmp_path)
    assert res.status == 0
    cov = res.manifest["summary"]["coverage_3sigma"]
    assert set(cov) == {"omega_res", "kappa_in", "kappa_ex"}
    assert all(v >= 0.8 for v in cov.values())
    assert len(read_csv(tmp_path / "trials.csv")["trial"]) == 20


def test_plots_are_deterministic(tmp_path):
    pytest.importorskip("matplotlib")
    _run("fig3_delay", tmp_path / "a", plots=True)
    _run("fig3_delay", tmp_path / "b", plots=True)
    a = (tmp_path / "a" / "group_delay.svg").read_bytes()
    assert a.startswith(b"<?xml") and a == (tmp_path / "b" / "group_delay.svg").read_bytes()
