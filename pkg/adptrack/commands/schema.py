"""`adptrack schema`: print the config file schema."""
from adptrack.commands import EXIT_OK
from adptrack.config_schema import get_schema_json, get_schema_yaml


def register(subparsers) -> None:
    p = subparsers.add_parser("schema", help="Print the scenario config schema (OpenAPI components).")
    p.add_argument("--format", choices=("yaml", "json"), default="yaml")
    p.set_defaults(handler=run)


def run(args) -> int:
    text = get_schema_json() if args.format == "json" else get_schema_yaml()
    print(text.rstrip("\n"))
    return EXIT_OK
