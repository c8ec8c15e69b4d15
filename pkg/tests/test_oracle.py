import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from adptrack.bases import ValueBasis
from adptrack.errors import BasisMismatch, ConfigError, NoConvergence
from adptrack.oracle import (LqSpec, are_residual, ideal_quadratic_weights, initial_gain, is_hurwitz,
                             lq_spec_for, solve_are)
from adptrack.scenarios import build_scenario
from tests.conftest import load_cfg


def test_scalar_riccati():
    sol = solve_are(LqSpec(A=[[-1.0]], B=[[1.0]], Q_e=[[1.0]], R=[[1.0]]))
    assert sol.P[0, 0] == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-10)
    assert sol.K[0, 0] == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-10)
    assert sol.residual <= 1e-10


def test_twostate_riccati_matches_residual_and_is_stabilizing():
    A = np.array([[0.0, 1.0], [-1.0, -0.5]])
    B = np.array([[0.0], [1.0]])
    spec = LqSpec(A=A, B=B, Q_e=np.eye(2), R=np.eye(1))
    sol = solve_are(spec)
    assert are_residual(spec, sol.P) <= 1e-10
    assert np.all(np.linalg.eigvalsh(sol.P) > 0)
    assert is_hurwitz(A - B @ sol.K)


def test_residuals_do_not_increase():
    spec = LqSpec(A=[[0.0, 1.0], [-1.0, -0.5]], B=[[0.0], [1.0]], Q_e=np.eye(2), R=[[1.0]])
    sol = solve_are(spec, K0=np.array([[0.0, 0.0]]))
    assert all(b <= a * (1 + 1e-9) + 1e-14 for a, b in zip(sol.residuals[1:], sol.residuals[2:]))
    assert sol.iterations == len(sol.residuals)


def test_unstable_plant_gets_stabilizing_initial_gain():
    spec = LqSpec(A=[[1.0, 1.0], [0.0, 2.0]], B=[[0.0], [1.0]], Q_e=np.eye(2), R=[[1.0]])
    K0 = initial_gain(spec)
    assert is_hurwitz(spec.A - spec.B @ K0)
    sol = solve_are(spec)
    assert sol.residual <= 1e-10


def test_zero_initial_gain_for_hurwitz_plant():
    spec = LqSpec(A=[[-2.0]], B=[[1.0]], Q_e=[[1.0]], R=[[1.0]])
    assert_allclose(initial_gain(spec), [[0.0]])


def test_destabilizing_initial_gain_raises():
    spec = LqSpec(A=[[-1.0]], B=[[1.0]], Q_e=[[1.0]], R=[[1.0]])
    with pytest.raises(NoConvergence):
        solve_are(spec, K0=np.array([[-5.0]]))


def test_unstabilizable_pair_raises():
    spec = LqSpec(A=[[1.0, 0.0], [0.0, 1.0]], B=[[0.0], [1.0]], Q_e=np.eye(2), R=[[1.0]])
    with pytest.raises(NoConvergence):
        solve_are(spec, K0=np.array([[0.0, 5.0]]))


def test_spec_validation():
    with pytest.raises(ValueError):
        LqSpec(A=[[1.0]], B=[[1.0]], Q_e=[[1.0]], R=[[0.0]])
    with pytest.raises(ValueError):
        LqSpec(A=np.eye(2), B=[[1.0]], Q_e=np.eye(2), R=[[1.0]])


def test_ideal_quadratic_weights_reproduce_value():
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    basis = ValueBasis(n=2, kind="poly_e", degrees=(2,))
    W = ideal_quadratic_weights(P, basis)
    assert_allclose(W, [2.0, 1.0, 1.0])
    zeta = np.array([0.3, -1.2, 4.0, 4.0])
    e = zeta[:2]
    assert W @ basis.sigma(zeta) == pytest.approx(e @ P @ e)


def test_ideal_weights_need_quadratic_error_basis():
    with pytest.raises(BasisMismatch):
        ideal_quadratic_weights(np.eye(2), ValueBasis(n=2, kind="poly_zeta", degrees=(2,)))
    with pytest.raises(BasisMismatch):
        ideal_quadratic_weights(np.eye(1), ValueBasis(n=1, kind="poly_e", degrees=(2, 4)))


def test_solution_to_dict():
    doc = solve_are(LqSpec(A=[[-1.0]], B=[[1.0]], Q_e=[[1.0]], R=[[1.0]])).to_dict()
    assert set(doc) == {"P", "K", "residual", "iterations"}
    assert isinstance(doc["P"], list)


def test_lq_spec_for():
    sc = build_scenario(load_cfg("twostate_lq"))
    assert_allclose(lq_spec_for(sc).B, [[0.0], [1.0]])
    with pytest.raises(ConfigError) as exc:
        lq_spec_for(build_scenario(load_cfg("twostate_nl")))
    assert exc.value.path == "scenario"
