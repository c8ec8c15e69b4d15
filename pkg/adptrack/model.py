"""
Tracking problem definition: plant, desired trajectory, cost, and the
concatenated state ζ = [e; x_d] the controller works in.

Every evaluator (f, g, h_d, Q) broadcasts over leading axes: f takes an
array of shape (..., n) and returns (..., n), g returns (..., n, m) and Q
returns (...). All operations here inherit that, so a batch of grid
points is evaluated in one call.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from adptrack.errors import RankDeficient

log = logging.getLogger("adptrack.model")

RANK_TOL = 1e-10

Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SystemModel:
    """Control-affine plant ẋ = f(x) + g(x)u."""
    n: int
    m: int
    f: Evaluator
    g: Evaluator
    true_theta: np.ndarray | None = None   # ideal identifier weights, when f is exactly representable


@dataclass(frozen=True)
class DesiredTrajectory:
    h_d: Evaluator
    x_d0: np.ndarray
    d: float            # bound on ‖x_d‖ along the desired orbit


@dataclass(frozen=True)
class CostSpec:
    Q: Evaluator        # state penalty on the tracking error, Q(0) = 0
    R: np.ndarray

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        object.__setattr__(self, "R", R)
        if not np.allclose(R, R.T, atol=1e-12):
            raise ValueError("R must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")

    @property
    def R_inv(self) -> np.ndarray:
        return np.linalg.inv(self.R)


@dataclass(frozen=True)
class ConcatState:
    """ζ = [eᵀ, x_dᵀ]ᵀ, error block first."""
    e: np.ndarray
    x_d: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.e, float), np.asarray(self.x_d, float)], axis=-1)

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.e, float) + np.asarray(self.x_d, float)

    @classmethod
    def from_vector(cls, zeta: np.ndarray, n: int) -> "ConcatState":
        zeta = np.asarray(zeta, dtype=float)
        return cls(e=zeta[..., :n], x_d=zeta[..., n:])


@dataclass(frozen=True)
class KnownDynamics:
    """
    The part of the tracking problem the controller is allowed to see.

    Holds g, h_d and the cost but never the drift f; controller-side code
    only receives this object, so it can only reach f through the
    identifier's estimate.
    """
    n: int
    m: int
    g: Evaluator
    h_d: Evaluator
    cost: CostSpec


@dataclass(frozen=True)
class TrackingProblem:
    plant: SystemModel
    desired: DesiredTrajectory
    cost: CostSpec

    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def m(self) -> int:
        return self.plant.m

    def known(self) -> KnownDynamics:
        return KnownDynamics(n=self.plant.n, m=self.plant.m, g=self.plant.g,
                             h_d=self.desired.h_d, cost=self.cost)


def split_zeta(zeta, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (e, x_d) from a ConcatState or a (..., 2n) array."""
    if isinstance(zeta, ConcatState):
        return np.asarray(zeta.e, float), np.asarray(zeta.x_d, float)
    zeta = np.asarray(zeta, dtype=float)
    return zeta[..., :n], zeta[..., n:]


def pseudoinverse(g_mat: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """
    Left pseudoinverse g⁺ = (gᵀg)⁻¹gᵀ of a full-column-rank (..., n, m) matrix.

    Raises RankDeficient when the smallest singular value is at or below tol.
    """
    g_mat = np.asarray(g_mat, dtype=float)
    if g_mat.ndim == 1:
        g_mat = g_mat[:, None]
    gt = np.swapaxes(g_mat, -1, -2)
    gtg = gt @ g_mat
    sigma_min = np.sqrt(np.clip(np.linalg.eigvalsh(gtg).min(), 0.0, None))
    if sigma_min <= tol:
        raise RankDeficient(sigma_min, tol)
    return np.linalg.solve(gtg, gt)


def steady_state_control(problem: TrackingProblem, x_d: np.ndarray) -> np.ndarray:
    """u_d(x_d) = g⁺(x_d)(h_d(x_d) − f(x_d))."""
    x_d = np.asarray(x_d, dtype=float)
    rhs = problem.desired.h_d(x_d) - problem.plant.f(x_d)
    return np.einsum("...ij,...j->...i", pseudoinverse(problem.plant.g(x_d)), rhs)


def matching_residual(problem: TrackingProblem, x_d: np.ndarray) -> np.ndarray:
    """‖(g g⁺ − I)(h_d − f)‖ at x_d; zero when the desired trajectory is feasible."""
    x_d = np.asarray(x_d, dtype=float)
    g_d = problem.plant.g(x_d)
    v = problem.desired.h_d(x_d) - problem.plant.f(x_d)
    proj = np.einsum("...ij,...jk,...k->...i", g_d, pseudoinverse(g_d), v)
    return np.linalg.norm(proj - v, axis=-1)


def concat_dynamics(problem: TrackingProblem, zeta) -> tuple[np.ndarray, np.ndarray]:
    """
    F and G of the autonomous form ζ̇ = F(ζ) + G(ζ)μ.

    F = [f(x) − h_d + g(x)u_d(x_d); h_d], G = [g(x); 0] with x = e + x_d.
    """
    n, m = problem.n, problem.m
    e, x_d = split_zeta(zeta, n)
    x = e + x_d
    h_d = problem.desired.h_d(x_d)
    g_x = problem.plant.g(x)
    u_d = steady_state_control(problem, x_d)
    F = np.concatenate([
        problem.plant.f(x) - h_d + np.einsum("...ij,...j->...i", g_x, u_d),
        h_d,
    ], axis=-1)
    G = np.concatenate([g_x, np.zeros(g_x.shape[:-2] + (n, m))], axis=-2)
    return F, G


def local_cost(cost: CostSpec, zeta, mu: np.ndarray) -> np.ndarray:
    """r(ζ, μ) = Q(e) + μᵀRμ."""
    if isinstance(zeta, ConcatState):
        e = np.asarray(zeta.e, dtype=float)
    else:
        zeta = np.asarray(zeta, dtype=float)
        e = zeta[..., : zeta.shape[-1] // 2]
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    return cost.Q(e) + np.einsum("...i,ij,...j->...", mu, cost.R, mu)
