"""
`adptrack selftest`: fast numerical checks of the library against known answers.

Each check returns (passed, detail). Exit code 4 if any fails.
"""
from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np
from scipy.stats import qmc

from adptrack.adp import ActorState, AdpContext, CriticState, bellman_identity, evaluate_bellman
from adptrack.bases import ValueBasis
from adptrack.commands import EXIT_OK, EXIT_SELFTEST
from adptrack.config import ScenarioConfig
from adptrack.model import matching_residual
from adptrack.oracle import LqSpec, ideal_quadratic_weights, solve_are
from adptrack.scenarios import build_scenario
from adptrack.sim import rk4_step

log = logging.getLogger("adptrack.commands.selftest")

Check = Callable[[], tuple[bool, str]]


def register(subparsers) -> None:
    p = subparsers.add_parser("selftest", help="Run built-in numerical checks.")
    p.set_defaults(handler=run)


def _decay(t, y):
    return -y


def _integrate_decay(h: float, T: float = 1.0) -> float:
    y = np.array([1.0])
    for i in range(int(round(T / h))):
        y = rk4_step(_decay, i * h, y, h)
    return float(y[0])


def check_rk4_step() -> tuple[bool, str]:
    factor = float(rk4_step(_decay, 0.0, np.array([1.0]), 0.1)[0])
    err = abs(factor - math.exp(-0.1))
    return err < 1e-7, f"factor={factor:.10f} |err|={err:.2e}"


def check_rk4_order() -> tuple[bool, str]:
    exact = math.exp(-1.0)
    e1 = abs(_integrate_decay(0.1) - exact)
    e2 = abs(_integrate_decay(0.05) - exact)
    ratio = e1 / e2
    return 12.0 <= ratio <= 20.0, f"richardson ratio={ratio:.3f}"


def check_are() -> tuple[bool, str]:
    sol = solve_are(LqSpec(A=[[-1.0]], B=[[1.0]], Q_e=[[1.0]], R=[[1.0]]))
    err = abs(sol.P[0, 0] - (math.sqrt(2.0) - 1.0))
    return err < 1e-10 and sol.residual <= 1e-10, f"P={sol.P[0, 0]:.12f} residual={sol.residual:.2e}"


def _lq_context(name: str):
    cfg = ScenarioConfig.from_dict({"scenario": name, "identifier": {"basis": {"bias": False}}})
    sc = build_scenario(cfg)
    ctx = AdpContext(known=sc.problem.known(), value_basis=sc.value_basis,
                     identifier_basis=sc.identifier_basis)
    W = ideal_quadratic_weights(solve_are(sc.lq, tol=1e-13).P, sc.value_basis)
    return sc, ctx, W


def _zeta_samples(n: int, count: int, seed: int = 7) -> np.ndarray:
    bounds = np.array([[-3.0, 3.0]] * n + [[-1.0, 1.0]] * n)
    pts = qmc.Halton(d=2 * n, scramble=True, seed=seed).random(count)
    return bounds[:, 0] + pts * (bounds[:, 1] - bounds[:, 0])


def check_bellman_at_ideal() -> tuple[bool, str]:
    worst = 0.0
    for name in ("scalar_lq", "twostate_lq"):
        sc, ctx, W = _lq_context(name)
        zetas = _zeta_samples(sc.problem.n, 1000)
        ev = evaluate_bellman(ctx, zetas, sc.true_theta, CriticState(W, np.eye(len(W))),
                              ActorState(W), nu=1.0)
        worst = max(worst, float(np.max(np.abs(ev.delta))))
    return worst <= 1e-9, f"max |δ̂|={worst:.2e}"


def check_bellman_identity() -> tuple[bool, str]:
    sc, ctx, W = _lq_context("twostate_lq")
    rng = np.random.default_rng(0)
    zetas = _zeta_samples(sc.problem.n, 50)
    worst = 0.0
    for _ in range(1000):
        critic = CriticState(W + rng.normal(size=W.shape), np.eye(len(W)))
        actor = ActorState(W + rng.normal(size=W.shape))
        theta_hat = sc.true_theta + rng.normal(size=sc.true_theta.shape)
        ev = evaluate_bellman(ctx, zetas, theta_hat, critic, actor, 1.0)
        ident = bellman_identity(ctx, zetas, W, sc.true_theta, theta_hat, critic, actor, 1.0)
        worst = max(worst, float(np.max(np.abs(ev.delta - ident))))
    return worst <= 1e-9, f"max |δ̂ − identity|={worst:.2e}"


def check_value_gradient() -> tuple[bool, str]:
    basis = ValueBasis(n=2, kind="poly_zeta", degrees=(2, 4))
    zetas = _zeta_samples(2, 20, seed=3)
    h = 1e-5
    worst = 0.0
    for z in zetas:
        analytic = basis.grad(z)
        numeric = np.empty_like(analytic)
        for k in range(z.size):
            dz = np.zeros_like(z)
            dz[k] = h
            numeric[:, k] = (basis.sigma(z + dz) - basis.sigma(z - dz)) / (2 * h)
        scale = np.maximum(np.abs(analytic), 1.0)
        worst = max(worst, float(np.max(np.abs(numeric - analytic) / scale)))
    return worst <= 1e-6, f"max rel err={worst:.2e}"


def check_matching() -> tuple[bool, str]:
    cfg = ScenarioConfig.from_dict({"scenario": "twostate_nl", "identifier": {"basis": {"kind": "scenario"}}})
    sc = build_scenario(cfg)
    h_d = sc.problem.desired.h_d
    x_d = np.asarray(sc.problem.desired.x_d0, dtype=float)
    orbit = [x_d]
    for i in range(1000):
        x_d = rk4_step(lambda t, y: h_d(y), i * 0.01, x_d, 0.01)
        orbit.append(x_d)
    worst = float(np.max(matching_residual(sc.problem, np.array(orbit))))
    return worst <= 1e-12, f"max residual={worst:.2e}"


CHECKS: list[tuple[str, Check]] = [
    ("rk4_step", check_rk4_step),
    ("rk4_order", check_rk4_order),
    ("are_scalar", check_are),
    ("bellman_at_ideal", check_bellman_at_ideal),
    ("bellman_identity", check_bellman_identity),
    ("value_gradient", check_value_gradient),
    ("matching_residual", check_matching),
]


def run_checks() -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:
            log.exception("Check %s raised", name)
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results


def run(args) -> int:
    results = run_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<18} {detail}")
    failed = [name for name, ok, _ in results if not ok]
    if failed:
        log.error("Selftest failed: %s", ", ".join(failed))
        return EXIT_SELFTEST
    return EXIT_OK
