"""`adptrack oracle`: Riccati ground truth for a linear-quadratic scenario."""
from __future__ import annotations

import logging

import yaml

from adptrack.commands import EXIT_OK, add_config_arguments, load_config
from adptrack.errors import BasisMismatch
from adptrack.oracle import ideal_quadratic_weights, lq_spec_for, solve_are
from adptrack.scenarios import build_scenario
from adptrack.serialize import dumps_json

log = logging.getLogger("adptrack.commands.oracle")


def register(subparsers) -> None:
    p = subparsers.add_parser("oracle", help="Solve the ARE and print P, K and the ideal value weights.")
    add_config_arguments(p)
    p.add_argument("--format", choices=("yaml", "json"), default="yaml")
    p.set_defaults(handler=run)


def oracle_document(scenario) -> dict:
    sol = solve_are(lq_spec_for(scenario))
    doc = {"scenario": scenario.name, **sol.to_dict()}
    try:
        W = ideal_quadratic_weights(sol.P, scenario.value_basis)
        doc["W"] = W.tolist()
        doc["basis"] = scenario.value_basis.describe()
    except BasisMismatch as exc:
        log.warning("No ideal weights for this value basis: %s", exc)
        doc["W"] = None
    return doc


def run(args) -> int:
    cfg = load_config(args.config, args.set)
    doc = oracle_document(build_scenario(cfg))
    if args.format == "json":
        print(dumps_json(doc))
    else:
        print(yaml.safe_dump(doc, default_flow_style=None, sort_keys=False), end="")
    return EXIT_OK
