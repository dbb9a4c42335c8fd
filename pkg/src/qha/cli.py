"""Command line entry point ``qha``.

    qha <scenario> --config FILE [--set section.key=value ...] [--out DIR] [--plot] [--strict]
    qha validate --level quick|full [--tolerance name=value ...] [--json FILE]
    qha plot RUN_DIR [--out DIR]

Exit status: 0 on success, 1 when a validation check (or, with ``--strict``,
a scenario assertion) fails, 2 for configuration errors, 3 when the solver
raises.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import SCENARIOS, load_config, parse_overrides
from .errors import ConfigError, MissingColumn, QHAError


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qha", description="1-D quantum hydrodynamics simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run a {name} scenario")
        p.add_argument("--config", help="INI-style scenario file")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")
        p.add_argument("--out", default="qha-out", help="output directory (default: %(default)s)")
        p.add_argument("--plot", action="store_true", help="also write gnuplot .dat/.plt files")
        p.add_argument("--strict", action="store_true", help="exit 1 if a recorded assertion fails")
    v = sub.add_parser("validate", help="run the acceptance checks")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.add_argument("--tolerance", action="append", default=[], metavar="NAME=VALUE",
                   help="override one check tolerance (repeatable)")
    v.add_argument("--json", metavar="FILE", help="also write the report as JSON")
    pl = sub.add_parser("plot", help="write plot data for an existing run directory")
    pl.add_argument("run_dir")
    pl.add_argument("--out", help="destination (default: the run directory)")
    return ap


def _validate(args) -> int:
    from .validation import TOLERANCES, format_table, validate_all

    tol = {}
    for item in args.tolerance:
        name, _, text = item.partition("=")
        if name not in TOLERANCES or not text:
            print(f"qha validate: bad tolerance {item!r}; known names: {', '.join(TOLERANCES)}", file=sys.stderr)
            return 2
        tol[name] = float(text)
    report = validate_all(args.level, tol)
    print(format_table(report))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return 0 if report["passed"] else 1


def _scenario(args) -> int:
    from .plotdata import emit_plot_data
    from .scenarios import run_scenario

    cfg = load_config(args.config, args.command, parse_overrides(args.set))
    try:
        manifest = run_scenario(cfg, args.out)
    except QHAError as exc:
        print(f"qha {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for a in manifest["assertions"]:
        flag = "ok  " if a["passed"] else "FAIL"
        print(f"{flag} {a['name']} = {a['value']:.6g} ({a['relation']} {a['threshold']:g})")
    print(f"wrote {', '.join(manifest['outputs'])} and manifest.json to {args.out}")
    if args.plot:
        emit_plot_data(args.out)
    failed = any(not a["passed"] for a in manifest["assertions"])
    return 1 if (args.strict and failed) else 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "validate":
            return _validate(args)
        if args.command == "plot":
            from .plotdata import emit_plot_data
            for path in emit_plot_data(args.run_dir, args.out):
                print(path)
            return 0
        return _scenario(args)
    except ConfigError as exc:
        print(f"qha: config error: {exc}", file=sys.stderr)
        return 2
    except (MissingColumn, FileNotFoundError) as exc:
        print(f"qha: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
