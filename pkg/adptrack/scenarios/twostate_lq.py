"""
Linear two-state plant with a single input in the second channel.

The desired trajectory shares the plant's first row, so the matching
condition holds and the error dynamics reduce to ė = Ae + Bμ.
"""
import numpy as np

from adptrack.model import SystemModel, TrackingProblem
from adptrack.oracle import LqSpec
from adptrack.scenarios import (Scenario, desired_trajectory, identifier_basis, plant_params,
                                quadratic_cost, register, stack_theta, value_basis, vector)

DEFAULTS = {"a21": -1.0, "a22": -0.5, "a11": 0.0, "a12": 1.0, "h21": -1.0, "h22": 0.0}


@register("twostate_lq")
def build(cfg) -> Scenario:
    p = plant_params(cfg, DEFAULTS)
    A = np.array([[p["a11"], p["a12"]], [p["a21"], p["a22"]]])
    H = np.array([[p["a11"], p["a12"]], [p["h21"], p["h22"]]])
    B = np.array([[0.0], [1.0]])

    def f(x):
        return np.asarray(x, dtype=float) @ A.T

    def g(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(B, x.shape[:-1] + (2, 1)).copy()

    def h_d(x_d):
        return np.asarray(x_d, dtype=float) @ H.T

    cost = quadratic_cost(cfg, 2, 1)
    # the desired orbit of the default H is the unit circle
    desired = desired_trajectory(cfg, 2, h_d, [1.0, 0.0], 1.0)
    ibasis = identifier_basis(cfg, 2, features=lambda x: np.asarray(x, dtype=float), p_features=2)
    true_theta = None
    if cfg.identifier.basis.kind in ("passthrough", "scenario"):
        true_theta = stack_theta(A.T, ibasis.bias)
    q = np.ones(2) if cfg.cost.q is None else np.asarray(cfg.cost.q, dtype=float)
    return Scenario(
        name="twostate_lq",
        problem=TrackingProblem(plant=SystemModel(n=2, m=1, f=f, g=g, true_theta=true_theta),
                                desired=desired, cost=cost),
        identifier_basis=ibasis,
        value_basis=value_basis(cfg, 2),
        x0=vector(cfg.sim.x0, 2, "sim.x0", [1.5, 0.5]),
        true_theta=true_theta,
        lq=LqSpec(A=A, B=B, Q_e=np.diag(q), R=cost.R),
    )
