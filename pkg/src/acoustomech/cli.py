"""Command-line front end.

::

    acoustomech run <scenario.cfg|preset> [--out DIR] [--seed N] [--set sec.key=value] [--plot]
    acoustomech fit <reflection|ringdown|amit> <data.csv> <params.cfg> [--out FILE]
    acoustomech check couplings <params.cfg> [--method fit|poles]
    acoustomech presets

Exit status: 0 success, 2 configuration error, 3 physics-domain error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import load_config, parse_value
from .errors import AcoustomechError, ConfigError
from .export import json_text
from .runner import Scenario, coupling_report, fit_data, list_presets, preset_path, run_scenario


def _overrides(items) -> dict:
    out = {}
    for it in items or ():
        if "=" not in it:
            raise ConfigError(f"--set expects section.key=value, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acoustomech", description="Dissipative acousto-mechanics simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file or shipped preset")
    r.add_argument("config", help="scenario .cfg path or preset name")
    r.add_argument("--out", default=None, help="output directory (default: out/<config stem>)")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--set", action="append", dest="overrides", metavar="SEC.KEY=VALUE",
                   help="override an option, e.g. integration.duration=0.1")
    r.add_argument("--plot", action="store_true", help="also write SVG plots (needs matplotlib)")

    f = sub.add_parser("fit", help="fit a measured CSV file")
    f.add_argument("kind", choices=["reflection", "s11", "ringdown", "amit"])
    f.add_argument("data")
    f.add_argument("params", help="config supplying the known system parameters")
    f.add_argument("--out", default=None, help="write the JSON result here instead of stdout")

    c = sub.add_parser("check", help="consistency checks")
    c.add_argument("what", choices=["couplings"])
    c.add_argument("params")
    c.add_argument("--method", choices=["fit", "poles"], default="fit")

    sub.add_parser("presets", help="list shipped presets")
    return p


def _cmd_run(args) -> int:
    out = Path(args.out) if args.out else Path("out") / Path(args.config).stem
    sc = Scenario(config_path=Path(args.config), out_dir=out, overrides=_overrides(args.overrides),
                  seed=args.seed, plots=args.plot)
    res = run_scenario(sc)
    if res.status != 0:
        print(f"error: {res.error}", file=sys.stderr)
    else:
        print(json_text({"out": str(out), "files": [f["name"] for f in res.manifest["files"]],
                         "summary": res.manifest["summary"]}), end="")
    return res.status


def _cmd_fit(args) -> int:
    cfg = load_config(preset_path(args.params))
    text = json_text(fit_data(args.kind, args.data, cfg))
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return 0


def _cmd_check(args) -> int:
    cfg = load_config(preset_path(args.params))
    rep = coupling_report(cfg.circuit, x_zpf=cfg.system.x_zpf, method=args.method)
    width = max(len(k) for k in rep)
    for k, v in rep.items():
        print(f"{k:<{width}}  {v:.6g}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "check":
            return _cmd_check(args)
        for name in list_presets():
            print(name)
        return 0
    except AcoustomechError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
