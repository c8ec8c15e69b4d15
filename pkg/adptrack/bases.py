"""
Value-function bases σ: ℝ²ⁿ → ℝᴸ with analytic gradients.

Polynomial families are monomials of the requested degrees in either the
tracking error e (so V̂(e=0) = 0) or the full concatenated state ζ.
Monomials of one degree follow itertools.combinations_with_replacement
order, e.g. {e₁², e₁e₂, e₂²} for n = 2.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

log = logging.getLogger("adptrack.bases")

BasisKind = Literal["poly_e", "poly_zeta", "custom"]


def monomial_exponents(d: int, degrees: tuple[int, ...]) -> np.ndarray:
    rows = []
    for deg in degrees:
        for combo in itertools.combinations_with_replacement(range(d), deg):
            row = np.zeros(d, dtype=int)
            for i in combo:
                row[i] += 1
            rows.append(row)
    return np.array(rows, dtype=int).reshape(len(rows), d)


@dataclass(frozen=True)
class ValueBasis:
    n: int
    kind: BasisKind = "poly_e"
    degrees: tuple[int, ...] = (2,)
    custom_sigma: Callable[[np.ndarray], np.ndarray] | None = None
    custom_grad: Callable[[np.ndarray], np.ndarray] | None = None
    custom_L: int = 0

    def __post_init__(self):
        if self.kind == "custom":
            if self.custom_sigma is None or self.custom_grad is None or self.custom_L < 1:
                raise ValueError("custom basis needs sigma, grad and L")
            return
        if not self.degrees or any(d < 1 for d in self.degrees):
            raise ValueError("polynomial degrees must be positive")
        d = self.n if self.kind == "poly_e" else 2 * self.n
        object.__setattr__(self, "_exponents", monomial_exponents(d, tuple(self.degrees)))

    @property
    def exponents(self) -> np.ndarray:
        return self._exponents

    @property
    def L(self) -> int:
        if self.kind == "custom":
            return self.custom_L
        return self._exponents.shape[0]

    def _vars(self, zeta: np.ndarray) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=float)
        return zeta[..., : self.n] if self.kind == "poly_e" else zeta

    def sigma(self, zeta: np.ndarray) -> np.ndarray:
        if self.kind == "custom":
            return np.asarray(self.custom_sigma(zeta), dtype=float)
        v = self._vars(zeta)
        return np.prod(v[..., None, :] ** self._exponents, axis=-1)

    def grad(self, zeta: np.ndarray) -> np.ndarray:
        """∇_ζσ, shape (..., L, 2n)."""
        if self.kind == "custom":
            return np.asarray(self.custom_grad(zeta), dtype=float)
        v = self._vars(zeta)
        ex = self._exponents
        d = ex.shape[1]
        eye = np.eye(d, dtype=int)
        # ∂/∂v_k of Π v^a = a_k · Π v^(a − e_k), with a_k = 0 killing the term
        lowered = np.maximum(ex[:, None, :] - eye[None, :, :], 0)
        partial = ex * np.prod(v[..., None, None, :] ** lowered, axis=-1)
        if self.kind == "poly_e":
            zeros = np.zeros(partial.shape[:-1] + (self.n,))
            partial = np.concatenate([partial, zeros], axis=-1)
        return partial

    def describe(self) -> list[str]:
        if self.kind == "custom":
            return [f"sigma_{i + 1}" for i in range(self.L)]
        sym = "e" if self.kind == "poly_e" else "z"
        names = []
        for row in self._exponents:
            parts = [f"{sym}{i + 1}" + (f"^{a}" if a > 1 else "") for i, a in enumerate(row) if a]
            names.append("*".join(parts))
        return names
