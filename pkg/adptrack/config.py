"""
Scenario configuration.

Typed dataclasses are the single source of truth for what a config file
may contain, their defaults and their ranges. Parsing is strict: unknown
keys, wrong types and out-of-range values raise ConfigError naming the
dotted field path (e.g. adp.gains.eta_c1). The same dataclasses feed the
schema document in adptrack.config_schema.
"""
from __future__ import annotations

import copy
import dataclasses
import json
import logging
import os
import pathlib
import types
import typing
from dataclasses import dataclass, field
from typing import Any, Literal, get_args, get_origin

import yaml

from adptrack.errors import ConfigError

log = logging.getLogger("adptrack.config")

SEED_ENV = "ADPTRACK_SEED"


def _num(default, *, minimum: float | None = None, gt: float | None = None, doc: str = ""):
    meta: dict[str, Any] = {"doc": doc}
    if minimum is not None:
        meta["minimum"] = minimum
    if gt is not None:
        meta["gt"] = gt
    return field(default=default, metadata=meta)


def _opt(doc: str = "", factory=None, default=None):
    if factory is not None:
        return field(default_factory=factory, metadata={"doc": doc})
    return field(default=default, metadata={"doc": doc})


# ── Sections ──────────────────────────────────────────────────

@dataclass
class DesiredConfig:
    """Desired trajectory overrides; unset values come from the scenario."""
    x_d0: list[float] | None = _opt("Initial desired state.")
    d: float | None = _num(None, minimum=0.0, doc="Bound on the desired state norm.")


@dataclass
class CostConfig:
    """Quadratic tracking cost Q(e) = Σ q_i e_i², control weight R."""
    q: list[float] | None = _opt("Diagonal state weights (default all ones).")
    r: list[list[float]] | None = _opt("Control weight matrix R (default identity).")


@dataclass
class IdentifierBasisConfig:
    """Drift basis σ_f: identity pass-through, random network, or the scenario's exact features."""
    kind: Literal["passthrough", "network", "scenario"] = "passthrough"
    p: int = _num(0, minimum=0, doc="Hidden width for kind=network.")
    activation: Literal["identity", "tanh", "gaussian"] = "tanh"
    seed: int = 0
    bias: bool = True


@dataclass
class StackConfig:
    """History stack and derivative window."""
    M: int = _num(10, minimum=1, doc="Stack capacity.")
    w: int = _num(3, minimum=3, doc="Odd central-difference window.")
    d_bar: float = _num(0.0, minimum=0.0, doc="Assumed derivative error bound.")
    min_separation: float = _num(0.0, minimum=0.0, doc="Reject candidates closer than this in feature space.")
    threshold: float = _num(0.1, minimum=0.0, doc="Excitation level reported as reached.")


@dataclass
class IdentifierConfig:
    basis: IdentifierBasisConfig = _opt(factory=IdentifierBasisConfig)
    k: float = _num(5.0, minimum=0.0, doc="Observer gain; nonnegative, 0 disables the correction.")
    k_theta: float = _num(1.0, minimum=0.0, doc="Concurrent-learning gain; nonnegative, 0 disables the stack term.")
    gamma_theta: float = _num(1.0, gt=0.0, doc="Diagonal adaptation gain.")
    theta_hat0: float = 0.0
    x_hat0: list[float] | None = _opt("Initial state estimate (default x0).")
    stack: StackConfig = _opt(factory=StackConfig)


@dataclass
class ValueBasisConfig:
    kind: Literal["poly_e", "poly_zeta"] = "poly_e"
    degrees: list[int] = _opt("Monomial degrees.", factory=lambda: [2])


@dataclass
class AdpGainsConfig:
    eta_c1: float = _num(0.1, minimum=0.0, doc="Critic gain at the current state; nonnegative, 0 disables.")
    eta_c2: float = _num(1.0, minimum=0.0, doc="Critic gain over the extrapolation grid; nonnegative, 0 disables.")
    eta_a1: float = _num(5.0, minimum=0.0, doc="Actor pull toward the critic; nonnegative, 0 disables.")
    eta_a2: float = _num(0.001, minimum=0.0, doc="Actor leakage; nonnegative, 0 disables.")
    nu: float = _num(0.1, minimum=0.0)
    beta: float = _num(0.1, minimum=0.0)
    Gamma_bar: float = _num(10.0, gt=0.0)


@dataclass
class AdpInitConfig:
    """Initial weights (a scalar fills the vector) and Γ(t₀) = γ₀I."""
    w_c: float | list[float] = 0.4
    w_a: float | list[float] = 0.4
    gamma0: float = _num(10.0, gt=0.0)


@dataclass
class GridConfig:
    """Extrapolation points."""
    N: int = _num(11, minimum=1)
    bounds: list[list[float]] | None = _opt("[lo, hi] per coordinate (default [-1, 1]).")
    layout: Literal["lattice", "halton"] = "lattice"
    strategy: Literal["tracking", "fixed_zeta"] = "tracking"
    seed: int = 0
    cbar_floor: float = _num(0.0, minimum=0.0, doc="Warn when cbar drops below this.")
    reselect: bool = False


@dataclass
class AdpConfig:
    basis: ValueBasisConfig = _opt(factory=ValueBasisConfig)
    gains: AdpGainsConfig = _opt(factory=AdpGainsConfig)
    init: AdpInitConfig = _opt(factory=AdpInitConfig)
    grid: GridConfig = _opt(factory=GridConfig)


@dataclass
class SimConfig:
    T: float = _num(50.0, gt=0.0, doc="Horizon in seconds.")
    dt: float = _num(0.001, gt=0.0, doc="Fixed RK4 step.")
    seed: int = 0
    x0: list[float] | None = _opt("Initial plant state (default from scenario).")
    sample_every: int = _num(1, minimum=1, doc="Keep every k-th step in the trace.")
    control_form: Literal["applied", "equivalent"] = "applied"
    divergence_bound: float = _num(1e9, gt=0.0)


@dataclass
class ChiConfig:
    """Compact set for sup-norm sampling."""
    e: list[list[float]] | None = None
    x_d: list[list[float]] | None = None


@dataclass
class AssumptionsConfig:
    """Lower bounds taken as given instead of measured."""
    gamma_lb: float | None = _num(None, gt=0.0)
    sigma_theta_lb: float | None = _num(None, gt=0.0)
    cbar_lb: float | None = _num(None, gt=0.0)


@dataclass
class GainsCheckConfig:
    chi: ChiConfig = _opt(factory=ChiConfig)
    n_samples: int = _num(256, minimum=1)
    seed: int = 0
    eps_bar: float = _num(0.0, minimum=0.0)
    eps_prime_bar: float = _num(0.0, minimum=0.0)
    eps_theta_bar: float = _num(0.0, minimum=0.0)
    rho_ball: float = _num(1.0, gt=0.0)
    w: list[float] | None = _opt("Value weights W when the scenario has no Riccati oracle.")
    assumptions: AssumptionsConfig = _opt(factory=AssumptionsConfig)


@dataclass
class ScenarioConfig:
    """A complete, validated simulation setup."""
    scenario: str
    plant: dict[str, float] = _opt("Scenario parameters.", factory=dict)
    desired: DesiredConfig = _opt(factory=DesiredConfig)
    cost: CostConfig = _opt(factory=CostConfig)
    identifier: IdentifierConfig = _opt(factory=IdentifierConfig)
    adp: AdpConfig = _opt(factory=AdpConfig)
    sim: SimConfig = _opt(factory=SimConfig)
    gains_check: GainsCheckConfig = _opt(factory=GainsCheckConfig)
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict, path: str = "") -> "ScenarioConfig":
        cfg = _parse_dataclass(cls, d, path)
        cfg._check()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def _check(self) -> None:
        if self.identifier.stack.w % 2 == 0:
            raise ConfigError("identifier.stack.w", "must be odd")
        if self.identifier.basis.kind == "network" and self.identifier.basis.p < 1:
            raise ConfigError("identifier.basis.p", "network basis needs p >= 1")
        if self.adp.init.gamma0 > self.adp.gains.Gamma_bar:
            raise ConfigError("adp.init.gamma0", "must not exceed adp.gains.Gamma_bar")
        if not self.adp.basis.degrees or any(deg < 1 for deg in self.adp.basis.degrees):
            raise ConfigError("adp.basis.degrees", "must be a non-empty list of positive degrees")
        if self.sim.dt > self.sim.T:
            raise ConfigError("sim.dt", "must not exceed sim.T")


# ── Strict parsing ────────────────────────────────────────────

def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _parse_dataclass(cls: type, raw: Any, path: str):
    if not isinstance(raw, dict):
        raise ConfigError(path, "must be an object")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in fields:
            raise ConfigError(_join(path, str(key)), "unknown key")
    kwargs = {}
    for name, f in fields.items():
        sub = _join(path, name)
        if name in raw:
            kwargs[name] = _coerce(hints[name], raw[name], sub, f.metadata)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(sub, "is required")
    return cls(**kwargs)


def _coerce(typ: Any, value: Any, path: str, meta) -> Any:
    origin = get_origin(typ)
    args = get_args(typ)

    # Optional / unions: first alternative that accepts the value wins
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        errors = []
        for alt in (a for a in args if a is not type(None)):
            try:
                return _coerce(alt, value, path, meta)
            except ConfigError as exc:
                errors.append(exc.message)
        raise ConfigError(path, " or ".join(errors))

    if origin is Literal:
        if value not in args:
            raise ConfigError(path, f"must be one of {', '.join(map(repr, args))}")
        return value

    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(path, "must be a list")
        item = args[0] if args else Any
        return [_coerce(item, v, f"{path}[{i}]", {}) for i, v in enumerate(value)]

    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(path, "must be an object")
        val_type = args[1] if len(args) == 2 else Any
        return {str(k): _coerce(val_type, v, _join(path, str(k)), {}) for k, v in value.items()}

    if dataclasses.is_dataclass(typ):
        return _parse_dataclass(typ, value, path)

    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "must be true or false")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "must be an integer")
        return _check_range(value, path, meta)
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, "must be a number")
        return _check_range(float(value), path, meta)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(path, "must be a string")
        return value
    return value


def _check_range(value, path: str, meta):
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(path, "must be finite")
    if "minimum" in meta and value < meta["minimum"]:
        raise ConfigError(path, f"must be >= {meta['minimum']}, got {value}")
    if "gt" in meta and value <= meta["gt"]:
        raise ConfigError(path, f"must be > {meta['gt']}, got {value}")
    return value


# ── Loading ───────────────────────────────────────────────────

def load_raw(path: str | os.PathLike) -> dict:
    """Read a JSON or YAML config file into a plain dict."""
    p = pathlib.Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {p}: {exc.strerror}")
    if p.suffix.lower() in (".yaml", ".yml"):
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError("", f"invalid YAML: {exc}",
                              line=mark.line + 1 if mark is not None else None)
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"invalid JSON: {exc.msg}", line=exc.lineno)
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be an object")
    return raw


def apply_env(raw: dict, env: dict | None = None) -> dict:
    env = os.environ if env is None else env
    seed = env.get(SEED_ENV, "").strip()
    if not seed:
        return raw
    try:
        value = int(seed)
    except ValueError:
        raise ConfigError(SEED_ENV, f"must be an integer, got {seed!r}")
    out = copy.deepcopy(raw)
    out.setdefault("sim", {})["seed"] = value
    log.info("Seed overridden from %s: %d", SEED_ENV, value)
    return out


def set_by_path(raw: dict, dotted: str, value: Any) -> dict:
    """Copy of raw with the dotted key set, creating intermediate objects."""
    out = copy.deepcopy(raw)
    node = out
    keys = dotted.split(".")
    for key in keys[:-1]:
        nxt = node.setdefault(key, {})
        if not isinstance(nxt, dict):
            raise ConfigError(dotted, f"{key} is not an object")
        node = nxt
    node[keys[-1]] = value
    return out


def parse_dict(raw: dict, env: dict | None = None) -> ScenarioConfig:
    """Validate a raw dict, including the scenario-specific checks."""
    from adptrack.scenarios import build_scenario

    cfg = ScenarioConfig.from_dict(apply_env(raw, env))
    build_scenario(cfg)
    return cfg


def parse_config(path: str | os.PathLike, env: dict | None = None) -> ScenarioConfig:
    """Load, validate and default-fill a scenario config file."""
    cfg = parse_dict(load_raw(path), env)
    log.info("Loaded config %s (scenario %s)", path, cfg.scenario)
    return cfg


def write_effective_config(cfg: ScenarioConfig, path: pathlib.Path) -> None:
    path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
