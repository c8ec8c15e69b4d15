"""
Nonlinear two-state benchmark.

    f(x) = [−x₁ + x₂; −½x₁ − ½x₂(cos 2x₁ + 1)²],  g(x) = [0; cos 2x₁ + 2]

The desired trajectory ẋ_d = [[−1, 1], [−2, 1]]x_d shares f's first
component, so the matching condition holds everywhere. Its orbits keep
x_dᵀ[[2, −1], [−1, 1]]x_d constant; from x_d0 = (0, 1) that level set
stays inside ‖x_d‖ ≤ 1.618.

The drift is exactly the span of [x₁, x₂, x₂cos 2x₁, x₂cos² 2x₁], which
the "scenario" identifier basis uses.
"""
import numpy as np

from adptrack.model import SystemModel, TrackingProblem
from adptrack.scenarios import (Scenario, desired_trajectory, identifier_basis, plant_params,
                                quadratic_cost, register, stack_theta, value_basis, vector)

H = np.array([[-1.0, 1.0], [-2.0, 1.0]])

THETA = np.array([
    [-1.0, -0.5],
    [1.0, -0.5],
    [0.0, -1.0],
    [0.0, -0.5],
])


def f(x):
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    c = np.cos(2.0 * x1)
    return np.stack([-x1 + x2, -0.5 * x1 - 0.5 * x2 * (c + 1.0) ** 2], axis=-1)


def g(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (2, 1))
    out[..., 1, 0] = np.cos(2.0 * x[..., 0]) + 2.0
    return out


def h_d(x_d):
    return np.asarray(x_d, dtype=float) @ H.T


def features(x):
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    c = np.cos(2.0 * x1)
    return np.stack([x1, x2, x2 * c, x2 * c * c], axis=-1)


@register("twostate_nl")
def build(cfg) -> Scenario:
    plant_params(cfg, {})
    ibasis = identifier_basis(cfg, 2, features=features, p_features=4)
    true_theta = stack_theta(THETA, ibasis.bias) if cfg.identifier.basis.kind == "scenario" else None
    return Scenario(
        name="twostate_nl",
        problem=TrackingProblem(
            plant=SystemModel(n=2, m=1, f=f, g=g, true_theta=true_theta),
            desired=desired_trajectory(cfg, 2, h_d, [0.0, 1.0], 1.62),
            cost=quadratic_cost(cfg, 2, 1),
        ),
        identifier_basis=ibasis,
        value_basis=value_basis(cfg, 2),
        x0=vector(cfg.sim.x0, 2, "sim.x0", [1.0, 1.0]),
        true_theta=true_theta,
    )
