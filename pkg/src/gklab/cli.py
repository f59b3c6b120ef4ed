"""Command line: ``gklab run <scenario> --config <file> --out <dir>``, ``list``, ``version``.

Exit codes: 0 all checks passed, 1 some check failed, 2 invalid config,
3 numerical failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .report import emit_report
from .scenarios import (WORKERS_ENV, ConfigError, NumericalFailure, default_config, list_scenarios,
                        load_config, run_scenario)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gklab", description="Total curvature laboratory.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario and write its report",
                         epilog=f"{WORKERS_ENV} overrides numerics.workers.")
    run.add_argument("scenario")
    run.add_argument("--config", help="JSON config; defaults to the catalog config with seed 0")
    run.add_argument("--out", help="output directory (overrides the config's output field)")
    run.add_argument("--quiet", action="store_true", help="do not print check lines")
    sub.add_parser("list", help="list the catalog")
    sub.add_parser("version", help="print the tool version")
    cfg = sub.add_parser("config", help="print a scenario's default config")
    cfg.add_argument("scenario")
    cfg.add_argument("--seed", type=int, default=0)
    return p


def _read_config(args):
    if args.config is None:
        return default_config(args.scenario)
    try:
        with open(args.config, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def _run(args) -> int:
    try:
        cfg = load_config(_read_config(args), args.scenario)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output
    if out is None:
        print("error: invalid config: no output directory (use --out)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_scenario(cfg)
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as exc:  # anything else is still a run that could not finish
        print(f"error: internal failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    try:
        emit_report(report, out)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        for c in report.checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")
    print(f"{report.scenario}: {'passed' if report.passed else 'FAILED'} -> {out}")
    return EXIT_OK if report.passed else EXIT_FAILED


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    if args.command == "list":
        for name, desc, anchor in list_scenarios():
            print(f"{name:<22} {desc}  [{anchor}]")
        return EXIT_OK
    if args.command == "config":
        try:
            print(json.dumps(default_config(args.scenario, args.seed), indent=2, sort_keys=True))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    return _run(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
