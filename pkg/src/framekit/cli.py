"""Command line entry point ``framekit``.

Exit codes: 0 when every verdict passes, 1 on a failed verdict, 2 on usage
or configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .report import Report
from .scenario import ConfigError, parse_config, run_scenario
from .verification import CRITERIA, DEFAULT_SEED, select, verify_reference

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="framekit", description="Constrained three-body frames: scenarios and reference checks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run the analyses listed in a TOML scenario")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--emit", choices=("json", "text"), help="override the output format of the config")
    run.add_argument("--seed", type=int, help="override the seed of the config")
    run.add_argument("--timing", action="store_true", help="include wall-clock times (breaks byte stability)")
    ver = sub.add_parser("verify", help="run the reference checks")
    names = sorted({c.analysis for c in CRITERIA} | {c.name for c in CRITERIA})
    ver.add_argument("--only", metavar="ANALYSIS", help=f"number or name, one of: {', '.join(names)}")
    ver.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ver.add_argument("--emit", choices=("json", "text"), default="text")
    ver.add_argument("--timing", action="store_true")
    return p


def _emit(report: Report, fmt: str) -> None:
    sys.stdout.write(report.to_json() if fmt == "json" else report.to_text())


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            print(f"framekit: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
            return EXIT_USAGE
        try:
            cfg = parse_config(text)
        except ConfigError as exc:
            print(f"framekit: {args.config}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.emit:
            cfg = dataclasses.replace(cfg, output=args.emit)
        report = run_scenario(cfg)
        if args.timing:
            for r in report.results:
                r.elapsed = r.measured
        _emit(report, cfg.output)
        return EXIT_OK if report.passed else EXIT_FAIL
    try:
        select(args.only)
    except KeyError:
        print(f"framekit: unknown criterion or analysis {args.only!r}", file=sys.stderr)
        return EXIT_USAGE
    report = verify_reference(args.seed, args.only, args.timing)
    _emit(report, args.emit)
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
