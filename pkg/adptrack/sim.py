"""
Closed-loop simulation.

Plant, identifier, critic, actor, Γ and the desired trajectory form one
ODE in the flat vector Z_sim, integrated with fixed-step RK4. Recording
into the history stack happens once per step, after integration, so rhs
sees a frozen stack for all four stages.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from adptrack import adp
from adptrack.adp import ActorState, AdpContext, AdpGains, CriticState
from adptrack.config import ScenarioConfig
from adptrack.diagnostics import Notices
from adptrack.errors import BasisMismatch, ConfigError, EmptyTrace, NumericalDivergence
from adptrack.model import concat_dynamics, steady_state_control
from adptrack.oracle import ideal_quadratic_weights, solve_are
from adptrack.scenarios import Scenario
from adptrack.sysid import (DerivativeBuffer, HistoryStack, IdentifierState, excitation_level,
                            identifier_lyapunov, identifier_xdot, record_experience, theta_dot)

log = logging.getLogger("adptrack.sim")

TAIL_FRACTION = 0.2


@dataclass(frozen=True)
class StateLayout:
    n: int
    dim: int        # identifier feature count (p+1 with bias)
    L: int

    @property
    def size(self) -> int:
        return 3 * self.n + self.n * self.dim + 2 * self.L + self.L * self.L


@dataclass
class ClosedLoopState:
    x: np.ndarray
    x_hat: np.ndarray
    x_d: np.ndarray
    theta_hat: np.ndarray
    W_c: np.ndarray
    W_a: np.ndarray
    Gamma: np.ndarray

    def pack(self) -> np.ndarray:
        """Z_sim = [x, x̂, x_d, vec_row(θ̂), Ŵ_c, Ŵ_a, vec_row(Γ)]."""
        return np.concatenate([
            self.x, self.x_hat, self.x_d, self.theta_hat.ravel(),
            self.W_c, self.W_a, self.Gamma.ravel(),
        ])

    @classmethod
    def unpack(cls, Z: np.ndarray, layout: StateLayout) -> "ClosedLoopState":
        n, dim, L = layout.n, layout.dim, layout.L
        if Z.shape != (layout.size,):
            raise ValueError(f"expected a flat state of size {layout.size}, got {Z.shape}")
        i = 0
        parts = []
        for size in (n, n, n, n * dim, L, L, L * L):
            parts.append(Z[i:i + size])
            i += size
        x, x_hat, x_d, th, wc, wa, gam = parts
        return cls(x=x.copy(), x_hat=x_hat.copy(), x_d=x_d.copy(),
                   theta_hat=th.reshape(dim, n).copy(), W_c=wc.copy(), W_a=wa.copy(),
                   Gamma=gam.reshape(L, L).copy())


@dataclass
class Trace:
    """Rows sampled at a constant interval; each row maps signal name to value."""
    n: int
    m: int
    L: int
    dim: int
    rows: list[dict] = field(default_factory=list)
    diverged: bool = False
    divergence: str | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def array(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])


def rk4_step(fn, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    """One classical Runge–Kutta step for ẏ = fn(t, y)."""
    k1 = fn(t, y)
    k2 = fn(t + dt / 2, y + dt / 2 * k1)
    k3 = fn(t + dt / 2, y + dt / 2 * k2)
    k4 = fn(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _init_vector(value, L: int, path: str) -> np.ndarray:
    if isinstance(value, list):
        if len(value) != L:
            raise ConfigError(path, f"expected {L} weights, got {len(value)}")
        return np.asarray(value, dtype=float)
    return np.full(L, float(value))


def build_grid(cfg: ScenarioConfig, n: int) -> adp.ExtrapolationGrid:
    """Extrapolation grid from the adp.grid section; the Halton seed is offset by sim.seed."""
    gc = cfg.adp.grid
    d = n if gc.strategy == "tracking" else 2 * n
    bounds = gc.bounds if gc.bounds is not None else [[-1.0, 1.0]] * d
    return adp.make_grid(n, gc.N, bounds, layout=gc.layout, strategy=gc.strategy,
                         seed=gc.seed + cfg.sim.seed)


def ideal_weights(scenario: Scenario) -> np.ndarray | None:
    """Oracle value weights for linear scenarios whose basis can express eᵀPe."""
    if scenario.lq is None:
        return None
    try:
        return ideal_quadratic_weights(solve_are(scenario.lq).P, scenario.value_basis)
    except BasisMismatch:
        return None


class Simulation:
    def __init__(self, scenario: Scenario, cfg: ScenarioConfig):
        self.scenario = scenario
        self.cfg = cfg
        problem = scenario.problem
        self.problem = problem
        n, m = problem.n, problem.m
        self.ctx = AdpContext(known=problem.known(), value_basis=scenario.value_basis,
                              identifier_basis=scenario.identifier_basis)
        self.layout = StateLayout(n=n, dim=scenario.identifier_basis.dim, L=scenario.value_basis.L)
        g = cfg.adp.gains
        self.gains = AdpGains(eta_c1=g.eta_c1, eta_c2=g.eta_c2, eta_a1=g.eta_a1, eta_a2=g.eta_a2,
                              nu=g.nu, beta=g.beta, Gamma_bar=g.Gamma_bar)
        self.grid = build_grid(cfg, n)
        ic = cfg.identifier
        self.stack = HistoryStack(capacity=ic.stack.M, dim=self.layout.dim, n=n, m=m,
                                  d_bar=ic.stack.d_bar, min_separation=ic.stack.min_separation)
        self.buffer = DerivativeBuffer(ic.stack.w)
        # times at which an updated stack first drives θ̂̇
        self._stack_changes: deque[float] = deque(maxlen=ic.stack.w)
        self.id_state = IdentifierState(
            x_hat=np.zeros(n), theta_hat=np.zeros((self.layout.dim, n)),
            k=ic.k, k_theta=ic.k_theta,
            Gamma_theta=ic.gamma_theta * np.eye(self.layout.dim))
        if cfg.sim.control_form == "equivalent" and scenario.true_theta is None:
            raise ConfigError("sim.control_form",
                              "equivalent form needs a scenario with exactly known drift weights")
        self.notices = Notices()
        self.W_ideal = ideal_weights(scenario)
        self.k = 0
        self.dt = cfg.sim.dt
        self.Z = self.initial_state().pack()
        self.excitation_time: float | None = None

    @property
    def t(self) -> float:
        return self.k * self.dt

    @property
    def state(self) -> ClosedLoopState:
        return ClosedLoopState.unpack(self.Z, self.layout)

    def initial_state(self) -> ClosedLoopState:
        cfg, sc = self.cfg, self.scenario
        n, L = self.layout.n, self.layout.L
        x0 = np.asarray(sc.x0, dtype=float)
        x_hat0 = x0.copy() if cfg.identifier.x_hat0 is None else np.asarray(cfg.identifier.x_hat0, float)
        if x_hat0.shape != (n,):
            raise ConfigError("identifier.x_hat0", f"expected {n} entries")
        return ClosedLoopState(
            x=x0.copy(),
            x_hat=x_hat0,
            x_d=np.asarray(sc.problem.desired.x_d0, dtype=float).copy(),
            theta_hat=np.full((self.layout.dim, n), cfg.identifier.theta_hat0),
            W_c=_init_vector(cfg.adp.init.w_c, L, "adp.init.w_c"),
            W_a=_init_vector(cfg.adp.init.w_a, L, "adp.init.w_a"),
            Gamma=cfg.adp.init.gamma0 * np.eye(L),
        )

    # ── Dynamics ──────────────────────────────────────────────

    def rhs(self, t: float, Z: np.ndarray, with_aux: bool = False):
        """dZ_sim/dt; with_aux also returns the signals logged in the trace."""
        s = ClosedLoopState.unpack(Z, self.layout)
        n = self.layout.n
        ctx, gains, problem = self.ctx, self.gains, self.problem
        e = s.x - s.x_d
        zeta = np.concatenate([e, s.x_d])
        zetas = np.vstack([zeta[None, :], self.grid.zetas(s.x_d)])
        critic = CriticState(W_c=s.W_c, Gamma=s.Gamma)
        actor = ActorState(W_a=s.W_a)

        ev = adp.evaluate_bellman(ctx, zetas, s.theta_hat, critic, actor, gains.nu)
        here, pts = ev.take(slice(0, 1)), ev.take(slice(1, None))
        mu_hat = ev.mu[0]
        h_d = problem.desired.h_d(s.x_d)

        if self.cfg.sim.control_form == "equivalent":
            F, G = concat_dynamics(problem, zeta)
            mu = adp.mu_equivalent(ctx, zeta, actor, self.scenario.true_theta, s.theta_hat)
            x_dot = F[:n] + G[:n] @ mu + h_d
            u = steady_state_control(problem, s.x_d) + mu
        else:
            u = mu_hat + adp.desired_input_estimate(ctx, s.x_d, s.theta_hat)
            x_dot = problem.plant.f(s.x) + problem.plant.g(s.x) @ u

        ids = self.id_state
        ids.x_hat, ids.theta_hat = s.x_hat, s.theta_hat
        basis, g = ctx.identifier_basis, ctx.known.g
        dZ = ClosedLoopState(
            x=x_dot,
            x_hat=identifier_xdot(s.x, s.x_hat, zeta, u, ids, basis=basis, g=g),
            x_d=h_d,
            theta_hat=theta_dot(ids, s.x, s.x_hat, self.stack, basis=basis),
            W_c=adp.critic_dot(critic, gains, here, pts),
            W_a=adp.actor_dot(actor, critic, gains, here, pts),
            Gamma=adp.gamma_dot(critic, here.omega[0], here.rho[0], gains),
        ).pack()
        if not np.all(np.isfinite(dZ)):
            raise NumericalDivergence("non-finite closed-loop derivative", t)
        if not with_aux:
            return dZ
        aux = {
            "u": np.atleast_1d(u),
            "mu_hat": mu_hat,
            "delta_t": float(here.delta[0]),
            "mean_abs_delta_i": float(np.mean(np.abs(pts.delta))) if pts.delta.size else 0.0,
            "max_abs_delta_i": adp.sampled_bellman_sup(pts),
            "cbar": adp.cbar_from_eval(pts),
        }
        return dZ, aux

    def _project_gamma(self, Z: np.ndarray) -> np.ndarray:
        """Symmetrize Γ and clip its spectrum to the saturation bound."""
        L = self.layout.L
        start = self.layout.size - L * L
        G = Z[start:].reshape(L, L)
        G = 0.5 * (G + G.T)
        w, V = np.linalg.eigh(G)
        if w[-1] > self.gains.Gamma_bar:
            w = np.minimum(w, self.gains.Gamma_bar)
            G = (V * w) @ V.T
            G = 0.5 * (G + G.T)
            self.notices.add("info", "Gamma saturated",
                             f"Γ clipped to its bound {self.gains.Gamma_bar:g}", t=self.t,
                             once="gamma-saturated")
        Z = Z.copy()
        Z[start:] = G.ravel()
        return Z

    def _row(self, aux: dict) -> dict:
        s = self.state
        e = s.x - s.x_d
        theta_tilde = (self.scenario.true_theta - s.theta_hat
                       if self.scenario.true_theta is not None else np.zeros_like(s.theta_hat))
        return {
            "t": self.t,
            "e": e,
            "x": s.x,
            "x_hat": s.x_hat,
            "x_d": s.x_d,
            "u": aux["u"],
            "mu_hat": aux["mu_hat"],
            "W_c": s.W_c,
            "W_a": s.W_a,
            "theta_hat": s.theta_hat.ravel(),
            "Gamma": s.Gamma,
            "delta_t": aux["delta_t"],
            "mean_abs_delta_i": aux["mean_abs_delta_i"],
            "max_abs_delta_i": aux["max_abs_delta_i"],
            "excitation_level": excitation_level(self.stack),
            "cbar": aux["cbar"],
            "gamma_norm": adp.spectral_norm(s.Gamma),
            "gamma_min_eig": float(np.linalg.eigvalsh(s.Gamma)[0]),
            "V0": identifier_lyapunov(s.x - s.x_hat, theta_tilde, self.id_state.Gamma_theta),
            "e_norm": float(np.linalg.norm(e)),
        }

    def _monitor(self, row: dict) -> None:
        cfg = self.cfg
        t = row["t"]
        if self.excitation_time is None and row["excitation_level"] >= cfg.identifier.stack.threshold > 0:
            self.excitation_time = t
            self.notices.add("info", "Excitation reached",
                             f"history stack excitation {row['excitation_level']:.4g} "
                             f">= {cfg.identifier.stack.threshold:g}", t=t)
        floor = cfg.adp.grid.cbar_floor
        if floor > 0 and row["cbar"] < floor:
            self.notices.add("warn", "cbar below floor",
                             f"extrapolation excitation {row['cbar']:.4g} < {floor:g}", t=t,
                             once="cbar-floor")
            if cfg.adp.grid.reselect:
                s = self.state
                self.grid, changed = adp.reselect_grid(
                    self.ctx, self.grid, s.x_d, s.theta_hat, ActorState(s.W_a), s.Gamma, self.gains.nu)
                if changed:
                    self.notices.add("info", "Grid reselected",
                                     f"new extrapolation points adopted ({self.grid.drawn} drawn)", t=t)
        bound = self.problem.desired.d
        if np.linalg.norm(row["x_d"]) > bound * (1 + 1e-9):
            self.notices.add("warn", "Desired state out of bounds",
                             f"‖x_d‖={np.linalg.norm(row['x_d']):.4g} > d={bound:g}", t=t,
                             once="xd-bound")

    # ── Stepping ──────────────────────────────────────────────

    def step(self, dt: float | None = None) -> dict:
        """
        Advance one RK4 step and return the trace row for the pre-step time.

        The buffer receives the pre-step sample; the stack is offered the
        buffer's centre sample after integration, unless a stack change
        falls strictly inside the buffer's window. A change switches θ̂̇
        and with it ẍ, so a stencil across it is only first-order accurate.
        """
        dt = self.dt if dt is None else dt
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = dt
        t, Z = self.t, self.Z
        k1, aux = self.rhs(t, Z, with_aux=True)
        row = self._row(aux)
        try:
            k2 = self.rhs(t + dt / 2, Z + dt / 2 * k1)
            k3 = self.rhs(t + dt / 2, Z + dt / 2 * k2)
            k4 = self.rhs(t + dt, Z + dt * k3)
            Z_new = self._project_gamma(Z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
            if not np.all(np.isfinite(Z_new)):
                raise NumericalDivergence("non-finite closed-loop state", t + dt)
            if np.linalg.norm(Z_new) > self.cfg.sim.divergence_bound:
                raise NumericalDivergence(
                    f"‖Z_sim‖ exceeded {self.cfg.sim.divergence_bound:g}", t + dt)
        except NumericalDivergence as exc:
            exc.row = row
            raise

        self.buffer.push(t, row["x"], aux["u"])
        self.Z = Z_new
        self.k += 1
        if self.buffer.ready and self._window_is_smooth():
            was_full = self.stack.full
            before = (len(self.stack), self.stack.replacements)
            record_experience(self.stack, self.buffer, basis=self.ctx.identifier_basis,
                              g=self.ctx.known.g)
            if (len(self.stack), self.stack.replacements) != before:
                self._stack_changes.append(self.t)
            if self.stack.full and not was_full:
                self.notices.add("info", "History stack full",
                                 f"{self.stack.capacity} entries recorded", t=self.t)
        self._monitor(row)
        return row

    def _window_is_smooth(self) -> bool:
        ts = self.buffer.times()
        return not any(ts[0] < c < ts[-1] for c in self._stack_changes)

    def final_row(self) -> dict:
        _, aux = self.rhs(self.t, self.Z, with_aux=True)
        return self._row(aux)

    def run(self, T: float | None = None, dt: float | None = None) -> Trace:
        """
        Integrate to T and return the sampled trace.

        On divergence the trace ends at the last valid row and is flagged.
        """
        T = self.cfg.sim.T if T is None else T
        dt = self.cfg.sim.dt if dt is None else dt
        if T <= 0 or dt <= 0:
            raise ValueError("T and dt must be positive")
        self.dt = dt
        every = self.cfg.sim.sample_every
        steps = int(math.floor(T / dt + 1e-9))
        trace = Trace(n=self.layout.n, m=self.problem.m, L=self.layout.L, dim=self.layout.dim)
        log.info("Simulating %s: T=%g dt=%g (%d steps)", self.scenario.name, T, dt, steps)
        try:
            for i in range(steps):
                row = self.step(dt)
                if i % every == 0:
                    trace.rows.append(row)
            if steps % every == 0:
                trace.rows.append(self.final_row())
        except NumericalDivergence as exc:
            last = getattr(exc, "row", None)
            if last is not None and (not trace.rows or trace.rows[-1] is not last):
                trace.rows.append(last)
            trace.diverged = True
            trace.divergence = str(exc)
            self.notices.add("error", "Divergence", str(exc), t=exc.t)
            log.error("Run aborted: %s", exc)
            return trace
        log.info("Finished %s: %d rows, final ‖e‖=%.4g", self.scenario.name, len(trace),
                 trace.rows[-1]["e_norm"] if trace.rows else float("nan"))
        return trace

    def derivative_error_max(self) -> float:
        """Largest ‖ẋ̄_j − ẋ_j‖ over the stack, against the true plant."""
        if not len(self.stack):
            return 0.0
        plant = self.problem.plant
        xs = np.array(self.stack.xs)
        us = np.array(self.stack.us)
        true = plant.f(xs) + np.einsum("kij,kj->ki", plant.g(xs), us)
        return float(np.max(np.linalg.norm(np.array(self.stack.xdots) - true, axis=1)))


def metrics(trace: Trace, *, true_theta: np.ndarray | None = None,
            W_ideal: np.ndarray | None = None, threshold: float = 0.1,
            theta_tol: float = 1e-3) -> dict:
    """Summary of a run: tail tracking error, parameter and weight errors, assumption monitors."""
    if not len(trace):
        raise EmptyTrace("trace has no rows")
    t = trace.array("t")
    e_norm = trace.array("e_norm")
    K = len(t)
    tail = min(int(math.floor((1.0 - TAIL_FRACTION) * K)), K - 1)
    cbar = trace.array("cbar")
    excitation = trace.array("excitation_level")
    v0 = trace.array("V0")

    hits = np.flatnonzero(excitation >= threshold) if threshold > 0 else np.array([], dtype=int)
    exc_idx = int(hits[0]) if hits.size else None

    out: dict = {
        "rows": K,
        "t_final": float(t[-1]),
        "diverged": trace.diverged,
        "divergence": trace.divergence,
        "tail_rms_e": float(np.sqrt(np.mean(e_norm[tail:] ** 2))),
        "final_e_norm": float(e_norm[-1]),
        "gamma_norm_max": float(np.max(trace.array("gamma_norm"))),
        "gamma_min_eig_min": float(np.min(trace.array("gamma_min_eig"))),
        "cbar_min": float(np.min(cbar)),
        "cbar_min_after_excitation": float(np.min(cbar[exc_idx:])) if exc_idx is not None else None,
        "excitation_time": float(t[exc_idx]) if exc_idx is not None else None,
        "excitation_final": float(excitation[-1]),
        "delta_tail_max": float(np.max(np.abs(trace.array("delta_t")[tail:]))),
        "grid_delta_sup_final": float(trace.rows[-1]["max_abs_delta_i"]),
        "v0_max_increase": float(np.max(np.diff(v0))) if K > 1 else 0.0,
        "theta_error": None,
        "theta_converged_time": None,
        "w_c_error": None,
        "w_a_error": None,
    }
    if true_theta is not None:
        err = np.linalg.norm(trace.array("theta_hat") - np.ravel(true_theta)[None, :], axis=1)
        out["theta_error"] = float(err[-1])
        # first time after which the error stays within tolerance
        bad = np.flatnonzero(err > theta_tol)
        if not bad.size:
            out["theta_converged_time"] = float(t[0])
        elif bad[-1] < K - 1:
            out["theta_converged_time"] = float(t[bad[-1] + 1])
    if W_ideal is not None:
        out["w_ideal"] = [float(w) for w in W_ideal]
        out["w_c_error"] = float(np.max(np.abs(trace.rows[-1]["W_c"] - W_ideal)))
        out["w_a_error"] = float(np.max(np.abs(trace.rows[-1]["W_a"] - W_ideal)))
    return out
