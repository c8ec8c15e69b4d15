"""
Scenario registry.

A scenario module registers a builder with @register("name"). The builder
turns a ScenarioConfig into a Scenario: the true plant (simulator side),
the desired trajectory, the cost, and the bases the controller learns with.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from adptrack.bases import ValueBasis
from adptrack.config import ScenarioConfig
from adptrack.errors import ConfigError
from adptrack.model import CostSpec, DesiredTrajectory, TrackingProblem
from adptrack.oracle import LqSpec
from adptrack.sysid import IdentifierBasis

log = logging.getLogger("adptrack.scenarios")


@dataclass(frozen=True)
class Scenario:
    name: str
    problem: TrackingProblem
    identifier_basis: IdentifierBasis
    value_basis: ValueBasis
    x0: np.ndarray
    true_theta: np.ndarray | None = None     # set when the drift lies exactly in the identifier basis span
    lq: LqSpec | None = None                 # set for linear scenarios with a Riccati oracle


Builder = Callable[[ScenarioConfig], Scenario]

_REGISTRY: dict[str, Builder] = {}


def register(name: str):
    def wrap(fn: Builder) -> Builder:
        _REGISTRY[name] = fn
        return fn
    return wrap


def names() -> list[str]:
    _load_builtin()
    return sorted(_REGISTRY)


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    _load_builtin()
    builder = _REGISTRY.get(cfg.scenario)
    if builder is None:
        raise ConfigError("scenario", f"unknown scenario {cfg.scenario!r}; known: {', '.join(sorted(_REGISTRY))}")
    return builder(cfg)


def _load_builtin() -> None:
    from adptrack.scenarios import scalar_lq, twostate_lq, twostate_nl  # noqa: F401


# ── Helpers shared by scenario modules ────────────────────────

def plant_params(cfg: ScenarioConfig, defaults: dict[str, float]) -> dict[str, float]:
    for key in cfg.plant:
        if key not in defaults:
            raise ConfigError(f"plant.{key}", f"unknown parameter for {cfg.scenario}")
    return {**defaults, **cfg.plant}


def vector(value, n: int, path: str, default) -> np.ndarray:
    if value is None:
        return np.asarray(default, dtype=float).reshape(n)
    if len(value) != n:
        raise ConfigError(path, f"expected {n} entries, got {len(value)}")
    return np.asarray(value, dtype=float)


def quadratic_cost(cfg: ScenarioConfig, n: int, m: int) -> CostSpec:
    q = vector(cfg.cost.q, n, "cost.q", np.ones(n))
    if np.any(q <= 0):
        raise ConfigError("cost.q", "state weights must be positive")
    if cfg.cost.r is None:
        R = np.eye(m)
    else:
        R = np.asarray(cfg.cost.r, dtype=float)
        if R.shape != (m, m):
            raise ConfigError("cost.r", f"expected a {m}x{m} matrix")
        if not np.allclose(R, R.T, atol=1e-12) or np.linalg.eigvalsh(R).min() <= 0:
            raise ConfigError("cost.r", "must be symmetric positive definite")
    return CostSpec(Q=lambda e: np.einsum("...i,i,...i->...", e, q, e), R=R)


def desired_trajectory(cfg: ScenarioConfig, n: int, h_d, x_d0_default, d_default: float) -> DesiredTrajectory:
    x_d0 = vector(cfg.desired.x_d0, n, "desired.x_d0", x_d0_default)
    d = d_default if cfg.desired.d is None else cfg.desired.d
    if np.linalg.norm(x_d0) > d:
        raise ConfigError("desired.d", f"initial desired state norm {np.linalg.norm(x_d0):.4g} exceeds d={d}")
    return DesiredTrajectory(h_d=h_d, x_d0=x_d0, d=d)


def value_basis(cfg: ScenarioConfig, n: int) -> ValueBasis:
    return ValueBasis(n=n, kind=cfg.adp.basis.kind, degrees=tuple(cfg.adp.basis.degrees))


def identifier_basis(cfg: ScenarioConfig, n: int, features=None, p_features: int = 0) -> IdentifierBasis:
    bc = cfg.identifier.basis
    if bc.kind == "passthrough":
        return IdentifierBasis.passthrough(n, bias=bc.bias)
    if bc.kind == "network":
        return IdentifierBasis.random(n, bc.p, activation=bc.activation, seed=bc.seed, bias=bc.bias)
    if features is None:
        raise ConfigError("identifier.basis.kind", f"{cfg.scenario} has no scenario feature map")
    return IdentifierBasis(n=n, kind="scenario", features=features, p_features=p_features, bias=bc.bias)


def stack_theta(weights: np.ndarray, bias: bool) -> np.ndarray:
    """Prefix a zero bias row when the basis carries one."""
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    if bias:
        return np.vstack([np.zeros((1, weights.shape[1])), weights])
    return weights
