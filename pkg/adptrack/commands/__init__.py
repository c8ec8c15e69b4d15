"""
Subcommands. Each module exposes register(subparsers), which adds its
parser and sets `handler` to a function taking the parsed args and
returning an exit code.
"""
from __future__ import annotations

import yaml

from adptrack.config import ScenarioConfig, load_raw, parse_dict, set_by_path
from adptrack.errors import ConfigError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_GAINS = 3
EXIT_SELFTEST = 4


def parse_assignment(text: str, flag: str = "--set") -> tuple[str, object]:
    """'adp.gains.nu=0.1' -> ('adp.gains.nu', 0.1); values are parsed as YAML scalars or lists."""
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(flag, f"expected key=value, got {text!r}")
    try:
        return key.strip(), yaml.safe_load(value)
    except yaml.YAMLError:
        raise ConfigError(flag, f"cannot parse value in {text!r}")


def load_raw_with_overrides(path: str, assignments: list[str] | None) -> dict:
    raw = load_raw(path)
    for text in assignments or []:
        key, value = parse_assignment(text)
        raw = set_by_path(raw, key, value)
    return raw


def load_config(path: str, assignments: list[str] | None = None) -> ScenarioConfig:
    return parse_dict(load_raw_with_overrides(path, assignments))


def add_config_arguments(parser) -> None:
    parser.add_argument("--config", required=True, help="Scenario config file (JSON or YAML).")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config field by dotted path; repeatable.")
