"""Scalar linear plant ẋ = ax + bu tracking a linear desired trajectory ẋ_d = h·x_d."""
import numpy as np

from adptrack.model import SystemModel, TrackingProblem
from adptrack.oracle import LqSpec
from adptrack.scenarios import (Scenario, desired_trajectory, identifier_basis, plant_params,
                                quadratic_cost, register, stack_theta, value_basis, vector)

DEFAULTS = {"a": -1.0, "b": 1.0, "h": 0.0}


@register("scalar_lq")
def build(cfg) -> Scenario:
    p = plant_params(cfg, DEFAULTS)
    a, b, h = p["a"], p["b"], p["h"]

    def f(x):
        return a * np.asarray(x, dtype=float)

    def g(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape + (1,), b)

    def h_d(x_d):
        return h * np.asarray(x_d, dtype=float)

    cost = quadratic_cost(cfg, 1, 1)
    desired = desired_trajectory(cfg, 1, h_d, [2.0], 2.0)
    ibasis = identifier_basis(cfg, 1, features=lambda x: np.asarray(x, dtype=float), p_features=1)
    true_theta = None
    if cfg.identifier.basis.kind in ("passthrough", "scenario"):
        true_theta = stack_theta([[a]], ibasis.bias)

    plant = SystemModel(n=1, m=1, f=f, g=g, true_theta=true_theta)
    q = 1.0 if cfg.cost.q is None else float(cfg.cost.q[0])
    return Scenario(
        name="scalar_lq",
        problem=TrackingProblem(plant=plant, desired=desired, cost=cost),
        identifier_basis=ibasis,
        value_basis=value_basis(cfg, 1),
        x0=vector(cfg.sim.x0, 1, "sim.x0", [3.0]),
        true_theta=true_theta,
        lq=LqSpec(A=[[a]], B=[[b]], Q_e=[[q]], R=cost.R),
    )
