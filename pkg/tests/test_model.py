import numpy as np
import pytest
from numpy.testing import assert_allclose

from adptrack.errors import RankDeficient
from adptrack.model import (ConcatState, CostSpec, DesiredTrajectory, SystemModel, TrackingProblem,
                            concat_dynamics, local_cost, matching_residual, pseudoinverse,
                            split_zeta, steady_state_control)


def _scalar_problem(h=0.0):
    plant = SystemModel(n=1, m=1, f=lambda x: -np.asarray(x, float),
                        g=lambda x: np.ones(np.shape(x) + (1,)))
    desired = DesiredTrajectory(h_d=lambda xd: h * np.asarray(xd, float), x_d0=np.array([2.0]), d=2.0)
    cost = CostSpec(Q=lambda e: np.sum(np.asarray(e) ** 2, axis=-1), R=np.eye(1))
    return TrackingProblem(plant=plant, desired=desired, cost=cost)


def test_pseudoinverse_is_left_inverse():
    g = np.array([[0.0], [3.0]])
    assert_allclose(pseudoinverse(g) @ g, np.eye(1))
    assert_allclose(pseudoinverse(g), [[0.0, 1.0 / 3.0]])


def test_pseudoinverse_broadcasts():
    g = np.stack([np.array([[1.0], [0.0]]), np.array([[0.0], [2.0]])])
    out = pseudoinverse(g)
    assert out.shape == (2, 1, 2)
    assert_allclose(out[1], [[0.0, 0.5]])


def test_pseudoinverse_rank_deficient():
    with pytest.raises(RankDeficient) as exc:
        pseudoinverse(np.zeros((2, 1)))
    assert exc.value.sigma_min == 0.0


def test_steady_state_control_scalar():
    problem = _scalar_problem()
    # h_d = 0, f = -x: holding x_d = 2 needs u = 2
    assert_allclose(steady_state_control(problem, np.array([2.0])), [2.0])


def test_concat_dynamics_scalar():
    problem = _scalar_problem()
    F, G = concat_dynamics(problem, np.array([1.0, 2.0]))
    assert_allclose(F, [-1.0, 0.0])
    assert_allclose(G, [[1.0], [0.0]])


def test_concat_dynamics_batched():
    problem = _scalar_problem(h=-0.5)
    zetas = np.array([[1.0, 2.0], [0.0, 1.0], [-1.0, 0.5]])
    F, G = concat_dynamics(problem, zetas)
    assert F.shape == (3, 2) and G.shape == (3, 2, 1)
    for k, z in enumerate(zetas):
        Fk, Gk = concat_dynamics(problem, z)
        assert_allclose(F[k], Fk)
        assert_allclose(G[k], Gk)


def test_zero_error_zero_control_is_equilibrium_of_error():
    problem = _scalar_problem(h=-0.3)
    F, _ = concat_dynamics(problem, np.array([0.0, 1.5]))
    assert F[0] == pytest.approx(0.0, abs=1e-15)
    assert F[1] == pytest.approx(-0.45)


def test_matching_residual_zero_for_feasible(nl_scenario, rng):
    x_d = rng.uniform(-1.5, 1.5, size=(200, 2))
    assert np.max(matching_residual(nl_scenario.problem, x_d)) <= 1e-12


def test_matching_residual_detects_infeasible():
    B = np.array([[0.0], [1.0]])
    plant = SystemModel(n=2, m=1, f=lambda x: np.zeros(np.shape(x)),
                        g=lambda x: np.broadcast_to(B, np.shape(x)[:-1] + (2, 1)))
    # first component of h_d is not reachable through g
    desired = DesiredTrajectory(h_d=lambda xd: np.asarray(xd, float), x_d0=np.array([1.0, 0.0]), d=2.0)
    cost = CostSpec(Q=lambda e: np.sum(np.asarray(e) ** 2, axis=-1), R=np.eye(1))
    problem = TrackingProblem(plant=plant, desired=desired, cost=cost)
    assert matching_residual(problem, np.array([1.0, 0.0])) == pytest.approx(1.0)


def test_local_cost():
    cost = CostSpec(Q=lambda e: np.sum(np.asarray(e) ** 2, axis=-1), R=np.array([[2.0]]))
    assert local_cost(cost, np.array([3.0, 2.0]), np.array([0.5])) == pytest.approx(9.0 + 0.5)
    zeta = ConcatState(e=np.array([1.0]), x_d=np.array([5.0]))
    assert local_cost(cost, zeta, 0.0) == pytest.approx(1.0)


def test_cost_rejects_indefinite_r():
    with pytest.raises(ValueError):
        CostSpec(Q=lambda e: e, R=np.array([[0.0]]))
    with pytest.raises(ValueError):
        CostSpec(Q=lambda e: e, R=np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_concat_state_split():
    zeta = ConcatState(e=np.array([1.0, -1.0]), x_d=np.array([0.5, 2.0]))
    assert_allclose(zeta.vector, [1.0, -1.0, 0.5, 2.0])
    assert_allclose(zeta.x, [1.5, 1.0])
    e, x_d = split_zeta(zeta.vector, 2)
    assert_allclose(e, zeta.e)
    assert_allclose(x_d, zeta.x_d)
    back = ConcatState.from_vector(zeta.vector, 2)
    assert_allclose(back.e, zeta.e)
