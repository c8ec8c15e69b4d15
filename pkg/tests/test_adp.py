import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from adptrack.adp import (ActorState, AdpGains, BellmanEval, CriticState, ExtrapolationGrid,
                          actor_dot, applied_control, bellman_error, bellman_identity, cbar,
                          cbar_from_eval, critic_dot, desired_input_estimate, evaluate_bellman,
                          extrapolation_dynamics, gamma_dot, make_grid, mu_equivalent, policy,
                          reselect_grid, sampled_bellman_sup)
from adptrack.errors import ConfigError
from adptrack.model import ConcatState, concat_dynamics
from adptrack.oracle import ideal_quadratic_weights, solve_are
from adptrack.scenarios import build_scenario
from tests.conftest import context_for, load_cfg

P_SCALAR = math.sqrt(2.0) - 1.0


def _gains(**kw):
    base = dict(eta_c1=0.1, eta_c2=1.0, eta_a1=5.0, eta_a2=0.001, nu=0.1, beta=0.1, Gamma_bar=10.0)
    base.update(kw)
    return AdpGains(**base)


def _eval(delta, omega, rho, G_sigma=None):
    delta = np.atleast_1d(np.asarray(delta, float))
    omega = np.atleast_2d(np.asarray(omega, float))
    L = omega.shape[1]
    if G_sigma is None:
        G_sigma = np.zeros((len(delta), L, L))
    return BellmanEval(delta=delta, omega=omega, rho=np.atleast_1d(np.asarray(rho, float)),
                       G_sigma=np.asarray(G_sigma, float), mu=np.zeros((len(delta), 1)))


def _empty(L):
    return _eval(np.zeros(0), np.zeros((0, L)), np.zeros(0), np.zeros((0, L, L)))


def test_policy_scalar(scalar_ctx):
    # V̂ = W_a e², g = 1, R = 1: μ̂ = −W_a e
    assert_allclose(policy(scalar_ctx, np.array([2.0, 2.0]), ActorState(np.array([1.0]))), [-2.0])
    batch = policy(scalar_ctx, np.array([[1.0, 0.0], [-3.0, 1.0]]), ActorState(np.array([0.5])))
    assert_allclose(batch, [[-0.5], [1.5]])


def test_desired_input_and_applied_control(scalar_ctx, scalar_scenario):
    theta = scalar_scenario.true_theta
    # h_d = 0 and drift −x_d: holding x_d = 2 needs û_d = 2
    assert_allclose(desired_input_estimate(scalar_ctx, np.array([2.0]), theta), [2.0])
    u = applied_control(scalar_ctx, np.array([0.0, 2.0]), ActorState(np.array([1.0])), theta)
    assert_allclose(u, [2.0])


def test_bellman_error_vanishes_at_ideal_weights(scalar_ctx, scalar_scenario, rng):
    W = np.array([P_SCALAR])
    critic = CriticState(W.copy(), np.eye(1))
    actor = ActorState(W.copy())
    zetas = np.column_stack([rng.uniform(-3, 3, 200), rng.uniform(-2, 2, 200)])
    ev = evaluate_bellman(scalar_ctx, zetas, scalar_scenario.true_theta, critic, actor, nu=1.0)
    assert np.max(np.abs(ev.delta)) <= 1e-9


def test_bellman_error_single_point_matches_batch(scalar_ctx, scalar_scenario):
    critic = CriticState(np.array([0.7]), 2.0 * np.eye(1))
    actor = ActorState(np.array([1.2]))
    zeta = ConcatState(e=np.array([0.4]), x_d=np.array([1.0]))
    delta, omega, rho = bellman_error(scalar_ctx, zeta, scalar_scenario.true_theta, critic, actor, 0.5)
    # ė = (a − W_a)e with a = −1: ω = 2e·ė
    e = 0.4
    w = 2 * e * (-1.0 - 1.2) * e
    assert_allclose(omega, [w])
    assert rho == pytest.approx(1.0 + 0.5 * 2.0 * w * w)
    assert delta == pytest.approx(e * e + (1.2 * e) ** 2 + 0.7 * w)


def test_bellman_identity_twostate():
    sc = build_scenario(load_cfg("twostate_lq"))
    ctx = context_for(sc)
    W = ideal_quadratic_weights(solve_are(sc.lq, tol=1e-13).P, sc.value_basis)
    rng = np.random.default_rng(5)
    zetas = rng.uniform(-2, 2, size=(30, 4))
    for _ in range(1000):
        critic = CriticState(W + rng.normal(size=3), np.eye(3))
        actor = ActorState(W + rng.normal(size=3))
        theta_hat = sc.true_theta + rng.normal(size=sc.true_theta.shape)
        ev = evaluate_bellman(ctx, zetas, theta_hat, critic, actor, 1.0)
        ident = bellman_identity(ctx, zetas, W, sc.true_theta, theta_hat, critic, actor, 1.0)
        assert_allclose(ev.delta, ident, rtol=0, atol=1e-9)


def test_bellman_identity_needs_drift_term():
    sc = build_scenario(load_cfg("twostate_lq"))
    ctx = context_for(sc)
    W = ideal_quadratic_weights(solve_are(sc.lq, tol=1e-13).P, sc.value_basis)
    zetas = np.random.default_rng(6).uniform(-2, 2, size=(10, 4))
    theta_hat = sc.true_theta + 0.5
    critic, actor = CriticState(W.copy(), np.eye(3)), ActorState(W.copy())
    ev = evaluate_bellman(ctx, zetas, theta_hat, critic, actor, 1.0)
    # ideal weights: only the drift mismatch is left
    assert np.max(np.abs(ev.delta)) > 1e-3
    assert_allclose(ev.delta, bellman_identity(ctx, zetas, W, sc.true_theta, theta_hat, critic, actor, 1.0),
                    rtol=0, atol=1e-9)


def test_extrapolation_dynamics_scalar(scalar_ctx, scalar_scenario):
    zeta = np.array([1.0, 2.0])
    F_theta, F_1 = extrapolation_dynamics(scalar_ctx, zeta, scalar_scenario.true_theta)
    assert_allclose(F_theta, [-1.0, 0.0])
    assert_allclose(F_1, [0.0, 0.0])


def test_extrapolation_dynamics_no_desired_motion(scalar_ctx, rng):
    zetas = rng.uniform(-3, 3, size=(40, 2))
    _, F_1 = extrapolation_dynamics(scalar_ctx, zetas, np.array([[0.7]]))
    assert_allclose(F_1, 0.0)


def test_extrapolation_dynamics_reassemble_drift(nl_scenario, rng):
    ctx = context_for(nl_scenario)
    zetas = rng.uniform(-2, 2, size=(100, 4))
    F_theta, F_1 = extrapolation_dynamics(ctx, zetas, nl_scenario.true_theta)
    F, _ = concat_dynamics(nl_scenario.problem, zetas)
    assert_allclose(F_theta + F_1, F, rtol=0, atol=1e-10)


def test_rho_at_least_one(scalar_ctx, scalar_scenario, rng):
    critic = CriticState(np.array([0.3]), 5.0 * np.eye(1))
    ev = evaluate_bellman(scalar_ctx, rng.normal(size=(50, 2)), scalar_scenario.true_theta,
                          critic, ActorState(np.array([2.0])), nu=0.1)
    assert np.all(ev.rho >= 1.0)
    assert np.all(ev.G_sigma >= 0.0)


def test_critic_dot_formula():
    gains = _gains(eta_c1=0.5, eta_c2=2.0)
    critic = CriticState(np.zeros(2), np.diag([1.0, 2.0]))
    here = _eval([1.0], [[1.0, 0.0]], [2.0])
    grid = _eval([1.0, -1.0], [[0.0, 1.0], [1.0, 1.0]], [1.0, 1.0])
    out = critic_dot(critic, gains, here, grid)
    inst = np.array([0.5, 0.0])
    extra = np.array([0.0, 1.0]) - np.array([1.0, 1.0])
    expected = -0.5 * critic.Gamma @ inst - (2.0 / 2) * critic.Gamma @ extra
    assert_allclose(out, expected)


def test_critic_dot_without_grid():
    gains = _gains(eta_c1=1.0)
    critic = CriticState(np.zeros(1), np.eye(1))
    out = critic_dot(critic, gains, _eval([2.0], [[3.0]], [4.0]), _empty(1))
    assert_allclose(out, [-1.5])


def test_zero_gains_freeze_weights():
    gains = _gains(eta_c1=0.0, eta_c2=0.0, eta_a1=0.0, eta_a2=0.0, beta=0.0)
    critic = CriticState(np.array([1.0, 2.0]), np.eye(2))
    actor = ActorState(np.array([-1.0, 0.5]))
    here = _eval([0.3], [[1.0, 2.0]], [1.5], np.eye(2)[None])
    grid = _eval([0.1, 0.2], [[1.0, 0.0], [0.0, 1.0]], [1.0, 2.0], np.stack([np.eye(2)] * 2))
    assert_allclose(critic_dot(critic, gains, here, grid), 0.0)
    assert_allclose(actor_dot(actor, critic, gains, here, grid), 0.0)
    assert_allclose(gamma_dot(critic, here.omega[0], here.rho[0], gains), 0.0)


def test_actor_dot_formula():
    gains = _gains(eta_c1=1.0, eta_c2=2.0, eta_a1=3.0, eta_a2=0.5)
    W_c = np.array([1.0])
    W_a = np.array([2.0])
    here = _eval([0.0], [[2.0]], [4.0], [[[3.0]]])
    grid = _eval([0.0], [[1.0]], [2.0], [[[5.0]]])
    out = actor_dot(ActorState(W_a), CriticState(W_c, np.eye(1)), gains, here, grid)
    expected = (-3.0 * (2.0 - 1.0) - 0.5 * 2.0
                + 1.0 * (3.0 * 2.0) * (2.0 * 1.0) / (4.0 * 4.0)
                + 2.0 * (5.0 * 2.0) * (1.0 * 1.0) / (4.0 * 1 * 2.0))
    assert_allclose(out, [expected])


def test_gamma_dot_formula_and_freeze():
    gains = _gains(eta_c1=2.0, beta=0.5, Gamma_bar=3.0)
    critic = CriticState(np.zeros(2), np.eye(2))
    omega = np.array([1.0, 0.0])
    out = gamma_dot(critic, omega, 2.0, gains)
    assert_allclose(out, 0.5 * np.eye(2) - 2.0 * np.outer(omega, omega) / 4.0)
    frozen = gamma_dot(CriticState(np.zeros(2), 4.0 * np.eye(2)), omega, 2.0, gains)
    assert_allclose(frozen, 0.0)


def test_gains_validation():
    with pytest.raises(ValueError, match=r"nonnegative \(0 disables"):
        _gains(eta_c1=-0.1)
    with pytest.raises(ValueError):
        _gains(Gamma_bar=0.0)


def test_lattice_grid():
    grid = make_grid(1, 11, [[-1.0, 1.0]])
    assert_allclose(grid.points[:, 0], np.linspace(-1.0, 1.0, 11))
    mid = make_grid(2, 1, [[0.0, 2.0], [-4.0, 0.0]])
    assert_allclose(mid.points, [[1.0, -2.0]])
    square = make_grid(2, 9, [[-1.0, 1.0], [-1.0, 1.0]])
    assert square.points.shape == (9, 2)
    assert_allclose(grid.zetas(np.array([0.5]))[:, 1], 0.5)


@pytest.mark.parametrize("n,N,bounds,path", [
    (2, 5, [[-1, 1], [-1, 1]], "adp.grid.N"),
    (1, 0, [[-1, 1]], "adp.grid.N"),
    (2, 4, [[-1, 1]], "adp.grid.bounds"),
    (1, 3, [], "adp.grid.bounds"),
    (1, 3, [[1, -1]], "adp.grid.bounds"),
])
def test_grid_errors(n, N, bounds, path):
    with pytest.raises(ConfigError) as exc:
        make_grid(n, N, bounds)
    assert exc.value.path == path


def test_halton_grid_deterministic_and_bounded():
    bounds = [[-2.0, 2.0], [0.0, 1.0]]
    a = make_grid(2, 16, bounds, layout="halton", seed=3)
    b = make_grid(2, 16, bounds, layout="halton", seed=3)
    assert_allclose(a.points, b.points)
    assert np.all(a.points[:, 0] >= -2.0) and np.all(a.points[:, 0] <= 2.0)
    assert np.all(a.points[:, 1] >= 0.0) and np.all(a.points[:, 1] <= 1.0)
    assert a.drawn == 16


def test_fixed_zeta_grid_ignores_desired_state():
    grid = make_grid(1, 4, [[-1, 1], [0, 2]], strategy="fixed_zeta")
    assert_allclose(grid.zetas(np.array([9.0])), grid.points)


def test_cbar(scalar_ctx, scalar_scenario):
    grid = make_grid(1, 11, [[-1.0, 1.0]])
    value = cbar(scalar_ctx, grid, np.array([2.0]), scalar_scenario.true_theta,
                 ActorState(np.array([1.0])), np.eye(1), 0.1)
    assert value > 0.0
    assert cbar_from_eval(_empty(1)) == 0.0
    # a grid at the error origin excites nothing
    origin = make_grid(1, 1, [[0.0, 0.0]])
    assert cbar(scalar_ctx, origin, np.array([2.0]), scalar_scenario.true_theta,
                ActorState(np.array([1.0])), np.eye(1), 0.1) == 0.0


def test_reselect_lattice_unchanged(scalar_ctx, scalar_scenario):
    grid = make_grid(1, 11, [[-1.0, 1.0]])
    out, changed = reselect_grid(scalar_ctx, grid, np.array([2.0]), scalar_scenario.true_theta,
                                 ActorState(np.array([1.0])), np.eye(1), 0.1)
    assert out is grid and not changed


def test_reselect_halton_advances_sequence(scalar_ctx, scalar_scenario):
    grid = make_grid(1, 4, [[-1.0, 1.0]], layout="halton", seed=1)
    first = grid.points.copy()
    out, changed = reselect_grid(scalar_ctx, grid, np.array([2.0]), scalar_scenario.true_theta,
                                 ActorState(np.array([1.0])), np.eye(1), 0.1)
    assert out.drawn == 8
    if changed:
        assert not np.allclose(out.points, first)
    else:
        assert_allclose(out.points, first)


def test_mu_equivalent_equals_policy_at_truth(scalar_ctx, scalar_scenario):
    actor = ActorState(np.array([0.8]))
    zeta = np.array([0.5, 1.5])
    theta = scalar_scenario.true_theta
    assert_allclose(mu_equivalent(scalar_ctx, zeta, actor, theta, theta), policy(scalar_ctx, zeta, actor))
    # θ̃ = 0.5 at x_d = 1.5 adds g⁺θ̃x_d = 0.75
    shifted = mu_equivalent(scalar_ctx, zeta, actor, theta, theta - 0.5)
    assert_allclose(shifted - policy(scalar_ctx, zeta, actor), [0.75])


def test_sampled_bellman_sup():
    assert sampled_bellman_sup(_eval([0.1, -0.4, 0.2], np.zeros((3, 1)), [1, 1, 1])) == pytest.approx(0.4)
    assert sampled_bellman_sup(_empty(1)) == 0.0


def test_grid_dataclass_counts():
    grid = ExtrapolationGrid(points=np.zeros((3, 2)))
    assert grid.N == 3
