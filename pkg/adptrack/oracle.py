"""
Riccati oracle for linear-quadratic scenarios.

When f, g and h_d are linear and the desired trajectory is feasible, the
error dynamics decouple as ė = Ae + Bμ, so V*(ζ) = eᵀPe with P from the
continuous-time ARE and μ* = −Ke. The ARE is solved by Newton–Kleinman
iteration: each step is one Lyapunov solve.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_lyapunov as solve_lyapunov

from adptrack.bases import ValueBasis
from adptrack.errors import BasisMismatch, ConfigError, NoConvergence

log = logging.getLogger("adptrack.oracle")

ARE_TOL = 1e-10


@dataclass(frozen=True)
class LqSpec:
    A: np.ndarray
    B: np.ndarray
    Q_e: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "Q_e", "R"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n:
            raise ValueError("A must be n×n and B must have n rows")
        if not np.allclose(self.Q_e, self.Q_e.T, atol=1e-12):
            raise ValueError("Q_e must be symmetric")
        if not np.allclose(self.R, self.R.T, atol=1e-12):
            raise ValueError("R must be symmetric")
        if np.linalg.eigvalsh(self.R).min() <= 0:
            raise ValueError("R must be positive definite")


@dataclass
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    residual: float
    iterations: int
    residuals: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "P": self.P.tolist(),
            "K": self.K.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
        }


def are_residual(spec: LqSpec, P: np.ndarray) -> float:
    A, B, Q, R = spec.A, spec.B, spec.Q_e, spec.R
    res = A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T) @ P + Q
    return float(np.linalg.norm(res, ord=2))


def is_hurwitz(A: np.ndarray) -> bool:
    return bool(np.all(np.linalg.eigvals(A).real < 0))


def initial_gain(spec: LqSpec) -> np.ndarray:
    """
    A stabilizing K₀ for the first Newton step.

    Zero when A is already Hurwitz, otherwise Bass's pole shift:
    (A+βI)Z + Z(A+βI)ᵀ = 2BBᵀ with β > ‖A‖ and K₀ = BᵀZ⁻¹.
    """
    A, B = spec.A, spec.B
    if is_hurwitz(A):
        return np.zeros((B.shape[1], A.shape[0]))
    beta = np.linalg.norm(A, ord=2) + 1.0
    shifted = A + beta * np.eye(A.shape[0])
    Z = solve_lyapunov(shifted, 2.0 * B @ B.T)
    return B.T @ np.linalg.pinv(Z)


def solve_are(spec: LqSpec, K0: np.ndarray | None = None,
              max_iter: int = 100, tol: float = ARE_TOL) -> RiccatiSolution:
    """
    Newton–Kleinman: (A−BK)ᵀP + P(A−BK) = −(Q + KᵀRK), K ← R⁻¹BᵀP.

    Raises NoConvergence when an iterate is not stabilizing or the
    residual stays above tol after max_iter steps.
    """
    A, B, Q, R = spec.A, spec.B, spec.Q_e, spec.R
    K = initial_gain(spec) if K0 is None else np.atleast_2d(np.asarray(K0, dtype=float))
    residuals: list[float] = []
    P = np.zeros_like(A)
    for it in range(1, max_iter + 1):
        A_k = A - B @ K
        if not is_hurwitz(A_k):
            raise NoConvergence(f"iterate {it} gain is not stabilizing; (A, B) may not be stabilizable")
        P = solve_lyapunov(A_k.T, -(Q + K.T @ R @ K))
        P = 0.5 * (P + P.T)
        K = np.linalg.solve(R, B.T @ P)
        residuals.append(are_residual(spec, P))
        log.debug("Newton-Kleinman iteration %d residual %.3e", it, residuals[-1])
        if residuals[-1] <= tol:
            return RiccatiSolution(P=P, K=K, residual=residuals[-1],
                                   iterations=it, residuals=residuals)
    raise NoConvergence(
        f"ARE residual {residuals[-1]:.3e} above {tol:.1e} after {max_iter} iterations")


def ideal_quadratic_weights(P: np.ndarray, basis: ValueBasis) -> np.ndarray:
    """
    Weights W with Wᵀσ(ζ) = eᵀPe for the degree-2 error monomial basis:
    W = P_ii on squares and 2P_ij on cross terms.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n = P.shape[0]
    if basis.kind != "poly_e" or tuple(basis.degrees) != (2,) or basis.n != n:
        raise BasisMismatch(
            f"need the degree-2 error monomial basis over {n} states, got "
            f"{basis.kind} degrees={tuple(basis.degrees) if basis.kind != 'custom' else '-'}")
    W = np.empty(basis.L)
    for idx, row in enumerate(basis.exponents):
        nz = np.flatnonzero(row)
        if len(nz) == 1:
            W[idx] = P[nz[0], nz[0]]
        else:
            W[idx] = 2.0 * P[nz[0], nz[1]]
    return W


def lq_spec_for(scenario) -> LqSpec:
    """The LqSpec of a linear scenario; ConfigError for scenarios without one."""
    if scenario.lq is None:
        raise ConfigError("scenario", f"{scenario.name} is not linear-quadratic; no Riccati oracle")
    return scenario.lq
