"""
Actor-critic approximation with Bellman-error extrapolation.

Everything here sees the problem through KnownDynamics and the identifier
estimate θ̂; the true drift is never evaluated. Bellman quantities are
evaluated for a whole batch of concatenated states at once (the current
state first, then the extrapolation grid), and every reduction over grid
points sums along axis 0 in a fixed order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.stats import qmc

from adptrack.bases import ValueBasis
from adptrack.errors import ConfigError
from adptrack.model import KnownDynamics, pseudoinverse, split_zeta
from adptrack.sysid import IdentifierBasis

log = logging.getLogger("adptrack.adp")


@dataclass(frozen=True)
class AdpContext:
    """What the controller is built from: the known dynamics and both bases."""
    known: KnownDynamics
    value_basis: ValueBasis
    identifier_basis: IdentifierBasis

    @property
    def n(self) -> int:
        return self.known.n

    @property
    def L(self) -> int:
        return self.value_basis.L


@dataclass
class CriticState:
    W_c: np.ndarray
    Gamma: np.ndarray


@dataclass
class ActorState:
    W_a: np.ndarray


@dataclass(frozen=True)
class AdpGains:
    eta_c1: float
    eta_c2: float
    eta_a1: float
    eta_a2: float
    nu: float
    beta: float
    Gamma_bar: float

    def __post_init__(self):
        for name in ("eta_c1", "eta_c2", "eta_a1", "eta_a2", "nu", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative (0 disables its term)")
        if self.Gamma_bar <= 0:
            raise ValueError("Gamma_bar must be positive")


@dataclass
class ExtrapolationGrid:
    """
    Points where the Bellman error is simulated.

    strategy "tracking" pairs the error-space points with the current x_d;
    "fixed_zeta" keeps a static set of full ζ points.
    """
    points: np.ndarray                  # (N, n) for tracking, (N, 2n) for fixed_zeta
    strategy: Literal["tracking", "fixed_zeta"] = "tracking"
    layout: Literal["lattice", "halton"] = "lattice"
    bounds: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    seed: int = 0
    drawn: int = 0                      # low-discrepancy points consumed so far

    @property
    def N(self) -> int:
        return self.points.shape[0]

    def zetas(self, x_d: np.ndarray) -> np.ndarray:
        if self.strategy == "fixed_zeta":
            return self.points
        x_d = np.broadcast_to(np.asarray(x_d, dtype=float), (self.N, self.points.shape[1]))
        return np.concatenate([self.points, x_d], axis=1)


@dataclass
class BellmanEval:
    """Batched Bellman quantities; leading axis indexes the evaluated points."""
    delta: np.ndarray       # (k,)
    omega: np.ndarray       # (k, L)
    rho: np.ndarray         # (k,)
    G_sigma: np.ndarray     # (k, L, L)
    mu: np.ndarray          # (k, m)

    def take(self, sl) -> "BellmanEval":
        return BellmanEval(self.delta[sl], self.omega[sl], self.rho[sl],
                           self.G_sigma[sl], self.mu[sl])


def _grad_G(ctx: AdpContext, zeta: np.ndarray) -> np.ndarray:
    """∇σ(ζ)·G(ζ), shape (..., L, m); G = [g(x); 0] so only the e-block contributes."""
    e, x_d = split_zeta(zeta, ctx.n)
    grad = ctx.value_basis.grad(zeta)
    return grad[..., : ctx.n] @ ctx.known.g(e + x_d)


def policy(ctx: AdpContext, zeta, actor: ActorState) -> np.ndarray:
    """μ̂ = −½R⁻¹Gᵀ∇σᵀŴ_a."""
    sg = _grad_G(ctx, zeta)
    return -0.5 * np.einsum("ij,...lj,l->...i", ctx.known.cost.R_inv, sg, actor.W_a)


def _sigma_theta_d(ctx: AdpContext, x_d: np.ndarray) -> np.ndarray:
    return ctx.identifier_basis.evaluate(x_d)


def desired_input_estimate(ctx: AdpContext, x_d, theta_hat) -> np.ndarray:
    """û_d = g⁺(x_d)(h_d(x_d) − θ̂ᵀσ_θd)."""
    x_d = np.asarray(x_d, dtype=float)
    drift = _sigma_theta_d(ctx, x_d) @ theta_hat
    return np.einsum("...ij,...j->...i", pseudoinverse(ctx.known.g(x_d)),
                     ctx.known.h_d(x_d) - drift)


def applied_control(ctx: AdpContext, zeta, actor: ActorState, theta_hat) -> np.ndarray:
    """u = μ̂ + û_d."""
    _, x_d = split_zeta(zeta, ctx.n)
    return policy(ctx, zeta, actor) + desired_input_estimate(ctx, x_d, theta_hat)


def extrapolation_dynamics(ctx: AdpContext, zeta, theta_hat) -> tuple[np.ndarray, np.ndarray]:
    """
    F_θ = [θ̂ᵀσ_θ(ζ) − g(x)g⁺(x_d)θ̂ᵀσ_θd; 0] and
    F_1 = [−h_d + g(x)g⁺(x_d)h_d; h_d].
    """
    e, x_d = split_zeta(zeta, ctx.n)
    x = e + x_d
    g_x = ctx.known.g(x)
    proj = g_x @ pseudoinverse(ctx.known.g(x_d))
    h_d = ctx.known.h_d(x_d)
    drift = ctx.identifier_basis.evaluate(x) @ theta_hat
    drift_d = _sigma_theta_d(ctx, x_d) @ theta_hat
    zeros = np.zeros_like(h_d)
    F_theta = np.concatenate(
        [drift - np.einsum("...ij,...j->...i", proj, drift_d), zeros], axis=-1)
    F_1 = np.concatenate(
        [np.einsum("...ij,...j->...i", proj, h_d) - h_d, h_d], axis=-1)
    return F_theta, F_1


def evaluate_bellman(ctx: AdpContext, zetas: np.ndarray, theta_hat,
                     critic: CriticState, actor: ActorState, nu: float) -> BellmanEval:
    """δ̂, ω, ρ, G_σ and μ̂ for a (k, 2n) batch of concatenated states."""
    zetas = np.atleast_2d(np.asarray(zetas, dtype=float))
    n = ctx.n
    e, x_d = zetas[:, :n], zetas[:, n:]
    grad = ctx.value_basis.grad(zetas)                          # (k, L, 2n)
    g_x = ctx.known.g(e + x_d)                                  # (k, n, m)
    sg = grad[..., :n] @ g_x                                    # (k, L, m)
    R_inv = ctx.known.cost.R_inv
    mu = -0.5 * np.einsum("ij,klj,l->ki", R_inv, sg, actor.W_a)
    F_theta, F_1 = extrapolation_dynamics(ctx, zetas, theta_hat)
    zdot = F_theta + F_1
    zdot[:, :n] += np.einsum("kij,kj->ki", g_x, mu)
    omega = np.einsum("klj,kj->kl", grad, zdot)
    rho = 1.0 + nu * np.einsum("kl,lj,kj->k", omega, critic.Gamma, omega)
    cost = ctx.known.cost.Q(e) + np.einsum("ki,ij,kj->k", mu, ctx.known.cost.R, mu)
    delta = cost + omega @ critic.W_c
    G_sigma = np.einsum("kli,ij,kqj->klq", sg, R_inv, sg)
    return BellmanEval(delta=delta, omega=omega, rho=rho, G_sigma=G_sigma, mu=mu)


def bellman_error(ctx: AdpContext, zeta, theta_hat, critic: CriticState,
                  actor: ActorState, nu: float) -> tuple[float, np.ndarray, float]:
    """Approximate Bellman error at one point: (δ̂, ω, ρ)."""
    zeta = zeta.vector if hasattr(zeta, "vector") else zeta
    ev = evaluate_bellman(ctx, np.asarray(zeta, float)[None, :], theta_hat, critic, actor, nu)
    return float(ev.delta[0]), ev.omega[0], float(ev.rho[0])


def critic_dot(critic: CriticState, gains: AdpGains,
               here: BellmanEval, grid: BellmanEval) -> np.ndarray:
    """Ŵ̇_c = −η_c1Γ(ω/ρ)δ̂_t − (η_c2/N)Γ Σ_i (ω_i/ρ_i)δ̂_ti."""
    inst = here.omega[0] * (here.delta[0] / here.rho[0])
    out = -gains.eta_c1 * critic.Gamma @ inst
    N = grid.delta.shape[0]
    if N:
        extra = np.sum(grid.omega * (grid.delta / grid.rho)[:, None], axis=0)
        out = out - (gains.eta_c2 / N) * critic.Gamma @ extra
    return out


def spectral_norm(mat: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(mat))))


def gamma_dot(critic: CriticState, omega: np.ndarray, rho: float, gains: AdpGains) -> np.ndarray:
    """Γ̇ = (βΓ − η_c1Γωωᵀ/ρ²Γ)·𝟙{‖Γ‖ ≤ Γ̄}."""
    Gamma = critic.Gamma
    if spectral_norm(Gamma) > gains.Gamma_bar:
        return np.zeros_like(Gamma)
    gw = Gamma @ omega
    return gains.beta * Gamma - gains.eta_c1 * np.outer(gw, gw) / rho ** 2


def actor_dot(actor: ActorState, critic: CriticState, gains: AdpGains,
              here: BellmanEval, grid: BellmanEval) -> np.ndarray:
    """
    Ŵ̇_a = −η_a1(Ŵ_a − Ŵ_c) − η_a2Ŵ_a
           + (η_c1G_σᵀŴ_aωᵀ/(4ρ) + Σ_i η_c2G_σiᵀŴ_aω_iᵀ/(4Nρ_i))Ŵ_c.
    """
    W_a, W_c = actor.W_a, critic.W_c
    out = -gains.eta_a1 * (W_a - W_c) - gains.eta_a2 * W_a
    out = out + gains.eta_c1 * (here.G_sigma[0].T @ W_a) * (here.omega[0] @ W_c) / (4.0 * here.rho[0])
    N = grid.delta.shape[0]
    if N:
        gs_wa = np.einsum("kql,q->kl", grid.G_sigma, W_a)        # G_σiᵀŴ_a
        scale = (grid.omega @ W_c) / (4.0 * N * grid.rho)
        out = out + gains.eta_c2 * np.sum(gs_wa * scale[:, None], axis=0)
    return out


def make_grid(n: int, N: int, bounds, layout: str = "lattice",
              strategy: str = "tracking", seed: int = 0) -> ExtrapolationGrid:
    """
    Deterministic extrapolation points over a box.

    bounds has one [lo, hi] pair per error coordinate (n rows) for the
    tracking strategy, or per ζ coordinate (2n rows) for fixed_zeta.
    A lattice splits N evenly across dimensions, so N must be a perfect
    d-th power; N = 1 gives the box midpoint.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2) if np.size(bounds) else np.zeros((0, 2))
    d = n if strategy == "tracking" else 2 * n
    if bounds.shape[0] == 0:
        raise ConfigError("adp.grid.bounds", "bounds must not be empty")
    if bounds.shape[0] != d:
        raise ConfigError("adp.grid.bounds", f"expected {d} [lo, hi] pairs, got {bounds.shape[0]}")
    if np.any(bounds[:, 1] < bounds[:, 0]):
        raise ConfigError("adp.grid.bounds", "each pair must satisfy lo <= hi")
    if N < 1:
        raise ConfigError("adp.grid.N", "must be at least 1")

    drawn = 0
    if layout == "lattice":
        per_dim = int(round(N ** (1.0 / d)))
        if per_dim ** d != N:
            raise ConfigError("adp.grid.N", f"lattice layout needs a perfect {d}-th power, got {N}")
        if per_dim == 1:
            axes = [np.array([0.5 * (lo + hi)]) for lo, hi in bounds]
        else:
            axes = [np.linspace(lo, hi, per_dim) for lo, hi in bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
    elif layout == "halton":
        points = _halton_points(bounds, N, seed, skip=0)
        drawn = N
    else:
        raise ConfigError("adp.grid.layout", f"unknown layout {layout!r}")
    return ExtrapolationGrid(points=points, strategy=strategy, layout=layout,
                             bounds=bounds, seed=seed, drawn=drawn)


def _halton_points(bounds: np.ndarray, count: int, seed: int, skip: int) -> np.ndarray:
    lo, hi = bounds[:, 0], bounds[:, 1]
    engine = qmc.Halton(d=bounds.shape[0], scramble=True, seed=seed)
    if skip:
        engine.fast_forward(skip)
    return lo + engine.random(count) * (hi - lo)


def cbar_from_eval(grid_eval: BellmanEval) -> float:
    """(1/N)λ_min(Σ_i ω_iω_iᵀ/ρ_i)."""
    N = grid_eval.delta.shape[0]
    if not N:
        return 0.0
    weighted = grid_eval.omega / np.sqrt(grid_eval.rho)[:, None]
    return max(float(np.linalg.eigvalsh(weighted.T @ weighted)[0]) / N, 0.0)


def cbar(ctx: AdpContext, grid: ExtrapolationGrid, x_d, theta_hat,
         actor: ActorState, Gamma: np.ndarray, nu: float) -> float:
    """Instantaneous extrapolation excitation at the current (θ̂, Ŵ_a, Γ, grid)."""
    critic = CriticState(W_c=np.zeros(ctx.L), Gamma=Gamma)
    ev = evaluate_bellman(ctx, grid.zetas(x_d), theta_hat, critic, actor, nu)
    return cbar_from_eval(ev)


def reselect_grid(ctx: AdpContext, grid: ExtrapolationGrid, x_d, theta_hat,
                  actor: ActorState, Gamma: np.ndarray, nu: float) -> tuple[ExtrapolationGrid, bool]:
    """
    Draw the next batch of low-discrepancy points and keep it only if it
    raises cbar. Lattice grids are returned unchanged.
    """
    if grid.layout != "halton":
        return grid, False
    before = cbar(ctx, grid, x_d, theta_hat, actor, Gamma, nu)
    fresh = _halton_points(grid.bounds, grid.N, grid.seed, skip=grid.drawn)
    candidate = ExtrapolationGrid(points=fresh, strategy=grid.strategy, layout=grid.layout,
                                  bounds=grid.bounds, seed=grid.seed, drawn=grid.drawn + grid.N)
    after = cbar(ctx, candidate, x_d, theta_hat, actor, Gamma, nu)
    if after > before:
        log.info("Extrapolation grid reselected: cbar %.4g -> %.4g", before, after)
        return candidate, True
    grid.drawn = candidate.drawn
    return grid, False


def mu_equivalent(ctx: AdpContext, zeta, actor: ActorState, theta_true, theta_hat) -> np.ndarray:
    """μ = μ̂ + g_d⁺θ̃ᵀσ_θd; only the simulator can form this, since it needs θ."""
    _, x_d = split_zeta(zeta, ctx.n)
    theta_tilde = np.asarray(theta_true, dtype=float) - np.asarray(theta_hat, dtype=float)
    corr = _sigma_theta_d(ctx, x_d) @ theta_tilde
    return policy(ctx, zeta, actor) + np.einsum(
        "...ij,...j->...i", pseudoinverse(ctx.known.g(x_d)), corr)


def sampled_bellman_sup(grid_eval: BellmanEval) -> float:
    """max_i |δ̂_i| over the evaluated points."""
    return float(np.max(np.abs(grid_eval.delta))) if grid_eval.delta.size else 0.0


def bellman_identity(ctx: AdpContext, zetas: np.ndarray, W: np.ndarray, theta_true, theta_hat,
                     critic: CriticState, actor: ActorState, nu: float) -> np.ndarray:
    """
    −W̃_cᵀω − Wᵀ∇σF_θ(ζ, θ̃) + ¼W̃_aᵀG_σW̃_a per point, with θ̃ = θ − θ̂.

    This is what δ̂ reduces to when V* = Wᵀσ and the drift θᵀσ_θ are
    both exact. F_θ is linear in its parameter argument.
    """
    zetas = np.atleast_2d(np.asarray(zetas, dtype=float))
    ev = evaluate_bellman(ctx, zetas, theta_hat, critic, actor, nu)
    W = np.asarray(W, dtype=float)
    wc = W - critic.W_c
    wa = W - actor.W_a
    theta_tilde = np.asarray(theta_true, dtype=float) - np.asarray(theta_hat, dtype=float)
    F_tilde, _ = extrapolation_dynamics(ctx, zetas, theta_tilde)
    drift_term = np.einsum("l,klj,kj->k", W, ctx.value_basis.grad(zetas), F_tilde)
    return -ev.omega @ wc - drift_term + 0.25 * np.einsum("l,klq,q->k", wa, ev.G_sigma, wa)
