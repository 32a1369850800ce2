"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import __version__
from .config import ConfigError, Scenario, dumps, load
from .keyrate import PhysicalityError
from .phasescreen import screen_for_pass_point
from .geometry import zenith_profile
from .runner import run_pass, select_optics, write_quantization, write_results
from .turbulence import NumericalError

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = ("simulate-pass", "gen-screens", "keyrate", "device-plan", "fit-dist", "quantization-report", "init-config")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario YAML file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--wavelength", type=float, action="append", metavar="NM", help="only this wavelength in nm (repeatable)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--device-faithful", action="store_true", help="hold the attenuator loss at its update rate")
    common.add_argument("--direction", choices=("up", "down"), help="override the propagation direction")

    p = argparse.ArgumentParser(prog="fsoemu", description="Satellite-to-ground optical channel emulator.")
    p.add_argument("--version", action="version", version=f"fsoemu {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate-pass", parents=[common], help="loss series, histograms, fits, key rate and device plans")
    g = sub.add_parser("gen-screens", parents=[common], help="phase screens at selected pass points")
    g.add_argument("--time-index", type=int, action="append", help="pass-point index (repeatable; default: culmination)")
    g.add_argument("--text", action="store_true", help="write plain-text matrices instead of binary")
    sub.add_parser("keyrate", parents=[common], help="key-rate report only")
    sub.add_parser("device-plan", parents=[common], help="actuator schedules only")
    sub.add_parser("fit-dist", parents=[common], help="histograms and distribution fits only")
    sub.add_parser("quantization-report", parents=[common], help="attenuator staleness across the pass")
    sub.add_parser("init-config", parents=[common], help="print the default scenario as YAML")
    return p


def scenario_from_args(args) -> Scenario:
    s = load(args.config) if args.config else Scenario()
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.out:
        kw["output_dir"] = args.out
    if args.direction:
        kw["direction"] = {"up": "uplink", "down": "downlink"}[args.direction]
    if args.device_faithful:
        kw["run"] = dataclasses.replace(s.run, device_faithful=True)
    try:
        return dataclasses.replace(s, **kw) if kw else s
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError([str(exc)]) from exc


def _gen_screens(s: Scenario, args) -> list[str]:
    os.makedirs(s.output_dir, exist_ok=True)
    path = zenith_profile(s.pass_)
    picks = args.time_index or [len(path) // 2]
    bad = [i for i in picks if not 0 <= i < len(path)]
    if bad:
        raise ConfigError([f"--time-index: {bad} outside 0..{len(path) - 1}"])
    written = []
    for o in select_optics(s, args.wavelength):
        nm = round(o.wavelength * 1e9)
        for i in picks:
            scr = screen_for_pass_point(path[i], s.profile, o, s.direction, s.seed, s.pass_, time_index=i,
                                        N=s.run.screen_size, oversize=s.run.screen_oversize,
                                        subharmonics=s.run.screen_subharmonics)
            name = os.path.join(s.output_dir, f"screen_{nm}nm_t{i:04d}." + ("txt" if args.text else "scr"))
            if args.text:
                with open(name, "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(scr.to_text())
            else:
                with open(name, "wb") as fh:
                    fh.write(scr.to_bytes())
            written.append(name)
    return written


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        s = scenario_from_args(args)
        if args.command == "init-config":
            sys.stdout.write(dumps(s))
            return 0
        cmd = args.command
        if cmd == "quantization-report":
            written = write_quantization(s, s.output_dir)
        elif cmd == "gen-screens":
            written = _gen_screens(s, args)
        else:
            opts = {
                "simulate-pass": dict(with_plan=True, with_screens=True, with_histograms=True),
                "keyrate": dict(with_plan=False, with_screens=False, with_histograms=False),
                "device-plan": dict(with_plan=True, with_screens=True, with_histograms=False),
                "fit-dist": dict(with_plan=False, with_screens=False, with_histograms=True),
            }[cmd]
            results = run_pass(s, args.wavelength, **opts)
            written = write_results(results, s, s.output_dir, cmd)
            if cmd == "keyrate":
                for r in results.values():
                    sys.stdout.write(r.report.to_text())
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, PhysicalityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for w in written:
        print(w)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
