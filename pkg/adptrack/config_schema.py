"""
Schema of the scenario config file, marshalled from adptrack.config.

Single source of truth: field types, defaults, ranges and descriptions come
from the config dataclasses and their field metadata. The document is an
OpenAPI 3 components section, printed by `adptrack schema`.
"""
from __future__ import annotations

import dataclasses
import json
import types
import typing
from typing import Any, Literal, get_args, get_origin

import yaml
from apispec import APISpec

from adptrack import config

# Dependencies first; the component name may differ from the class name.
CONFIG_ORDER: list[tuple[type, str]] = [
    (config.DesiredConfig, "Desired"),
    (config.CostConfig, "Cost"),
    (config.IdentifierBasisConfig, "IdentifierBasis"),
    (config.StackConfig, "HistoryStack"),
    (config.IdentifierConfig, "Identifier"),
    (config.ValueBasisConfig, "ValueBasis"),
    (config.AdpGainsConfig, "AdpGains"),
    (config.AdpInitConfig, "AdpInit"),
    (config.GridConfig, "ExtrapolationGrid"),
    (config.AdpConfig, "Adp"),
    (config.SimConfig, "Sim"),
    (config.ChiConfig, "Chi"),
    (config.AssumptionsConfig, "Assumptions"),
    (config.GainsCheckConfig, "GainsCheck"),
    (config.ScenarioConfig, "ScenarioConfig"),
]
REF_MAP: dict[type, str] = {cls: name for cls, name in CONFIG_ORDER}


def _type_to_schema(typ: Any, refs: dict[type, str]) -> dict[str, Any]:
    origin = get_origin(typ)
    args = get_args(typ)

    if args and type(None) in args and origin is not Literal:
        rest = [a for a in args if a is not type(None)]
        s = dict(_type_to_schema(rest[0] if len(rest) == 1 else typing.Union[tuple(rest)], refs))
        s["nullable"] = True
        return s

    if origin in (typing.Union, types.UnionType):
        return {"anyOf": [_type_to_schema(a, refs) for a in args]}

    if origin is Literal:
        return {"type": "string", "enum": list(args)}

    if origin is list:
        return {"type": "array", "items": _type_to_schema(args[0] if args else Any, refs)}

    if origin is dict:
        val = args[1] if len(args) == 2 else Any
        return {"type": "object", "additionalProperties": _type_to_schema(val, refs)}

    if dataclasses.is_dataclass(typ) and typ in refs:
        return {"$ref": f"#/components/schemas/{refs[typ]}"}

    if typ is str:
        return {"type": "string"}
    if typ is bool:
        return {"type": "boolean"}
    if typ is int:
        return {"type": "integer"}
    if typ is float:
        return {"type": "number"}
    return {}


def _apply_metadata(schema: dict[str, Any], f: dataclasses.Field) -> dict[str, Any]:
    meta = f.metadata
    if "$ref" in schema:
        schema = {"allOf": [schema]}
    if meta.get("doc"):
        schema["description"] = meta["doc"]
    if "minimum" in meta:
        schema["minimum"] = meta["minimum"]
    if "gt" in meta:
        schema["minimum"] = meta["gt"]
        schema["exclusiveMinimum"] = True
    if f.default is not dataclasses.MISSING and f.default is not None:
        schema["default"] = f.default
    elif f.default_factory is not dataclasses.MISSING:
        value = f.default_factory()
        if not dataclasses.is_dataclass(value):
            schema["default"] = value
    return schema


def _dataclass_to_schema(cls: type, refs: dict[type, str]) -> dict[str, Any]:
    hints = typing.get_type_hints(cls)
    properties: dict[str, Any] = {}
    required: list[str] = []
    for f in dataclasses.fields(cls):
        properties[f.name] = _apply_metadata(_type_to_schema(hints[f.name], refs), f)
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            required.append(f.name)
    out: dict[str, Any] = {"type": "object", "properties": properties,
                           "additionalProperties": False}
    if required:
        out["required"] = required
    if cls.__doc__ and not cls.__doc__.startswith(cls.__name__ + "("):
        out["description"] = cls.__doc__.strip().split("\n")[0]
    return out


def schemas_from_config() -> dict[str, dict[str, Any]]:
    return {name: _dataclass_to_schema(cls, REF_MAP) for cls, name in CONFIG_ORDER}


def build_spec() -> APISpec:
    spec = APISpec(
        title="adptrack scenario configuration",
        version="1.0.0",
        openapi_version="3.0.3",
        info=dict(description=(
            "Config files for `adptrack simulate`, `check-gains` and `oracle`. "
            "Unknown keys are rejected; omitted fields take the defaults shown."
        )),
    )
    for name, schema in schemas_from_config().items():
        spec.components.schema(name, schema)
    return spec


def get_schema_dict() -> dict:
    return build_spec().to_dict()


def get_schema_yaml() -> str:
    return yaml.dump(get_schema_dict(), default_flow_style=False, allow_unicode=True, sort_keys=False)


def get_schema_json() -> str:
    return json.dumps(get_schema_dict(), indent=2)
