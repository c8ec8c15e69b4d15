"""
adptrack command-line entrypoint.

Subcommands live in adptrack.commands; dispatch() is the only place that
turns library errors into exit codes.
"""
from __future__ import annotations

import argparse
import logging
import sys

from adptrack.commands import (EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, check_gains, oracle, schema,
                               selftest, simulate)
from adptrack.errors import AdpTrackError, ConfigError, NumericalDivergence
from adptrack.log_buffer import install_log_handler

log = logging.getLogger("adptrack.cli")

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

COMMANDS = (simulate, check_gains, oracle, selftest, schema)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adptrack",
        description="Model-based actor-critic optimal tracking: simulator and diagnostics.")
    parser.add_argument("--log-level", default="INFO", choices=LOG_LEVELS, type=str.upper)
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(sub)
    return parser


def _apply_log_level(name: str) -> None:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(name)s] %(levelname)s %(message)s")
    logging.getLogger().setLevel(getattr(logging, name.upper(), logging.INFO))


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse prints its own usage message
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    _apply_log_level(args.log_level)
    install_log_handler()

    try:
        return args.handler(args)
    except ConfigError as exc:
        log.error("Invalid configuration: %s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalDivergence as exc:
        log.error("Diverged: %s", exc)
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except AdpTrackError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
