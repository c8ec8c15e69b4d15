"""
Concurrent-learning identifier for the unknown drift.

The estimator runs x̂̇ = θ̂ᵀσ_θ + g(x)u + k·x̃ and adapts θ̂ from the
instantaneous residual x̃ plus a history stack of recorded
(x_j, u_j, ẋ̄_j) triples, where ẋ̄_j is a central finite difference. The
stack only admits replacements that raise λ_min(Σ σ_j σ_jᵀ), so once it
is excited it stays excited.
"""
from __future__ import annotations

import functools
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from adptrack.errors import BufferNotReady, NonuniformSpacing
from adptrack.model import Evaluator, split_zeta

log = logging.getLogger("adptrack.sysid")

SPACING_TOL = 1e-9

ACTIVATIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda z: z,
    "tanh": np.tanh,
    "gaussian": lambda z: np.exp(-z * z),
}


@dataclass(frozen=True)
class IdentifierBasis:
    """
    σ_f(Yᵀx₁) with x₁ = [1; x], optionally prefixed by a constant bias 1.

    kind "network" applies the named activation to Yᵀx₁ with a fixed
    (n+1)×p inner matrix Y; kind "scenario" uses an exact feature map
    supplied by the scenario in place of the network layer.
    """
    n: int
    kind: Literal["network", "scenario"] = "network"
    Y: np.ndarray | None = None
    activation: str = "identity"
    features: Evaluator | None = None
    p_features: int = 0
    bias: bool = True

    def __post_init__(self):
        if self.kind == "network":
            if self.Y is None:
                raise ValueError("network basis needs an inner weight matrix Y")
            if self.Y.shape[0] != self.n + 1:
                raise ValueError(f"Y must have {self.n + 1} rows, got {self.Y.shape[0]}")
            if self.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {self.activation!r}")
        elif self.features is None or self.p_features < 1:
            raise ValueError("scenario basis needs a feature map and its width")

    @classmethod
    def passthrough(cls, n: int, bias: bool = True) -> "IdentifierBasis":
        """Identity activation with Y selecting x, so σ_f = [1; x] (or x without bias)."""
        Y = np.vstack([np.zeros((1, n)), np.eye(n)])
        return cls(n=n, kind="network", Y=Y, activation="identity", bias=bias)

    @classmethod
    def random(cls, n: int, p: int, activation: str = "tanh",
               seed: int = 0, bias: bool = True) -> "IdentifierBasis":
        """Inner weights drawn uniformly from [−1, 1] with a fixed seed."""
        rng = np.random.default_rng(seed)
        Y = rng.uniform(-1.0, 1.0, size=(n + 1, p))
        return cls(n=n, kind="network", Y=Y, activation=activation, bias=bias)

    @property
    def p(self) -> int:
        return self.Y.shape[1] if self.kind == "network" else self.p_features

    @property
    def dim(self) -> int:
        return self.p + 1 if self.bias else self.p

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "network":
            x1 = np.concatenate([np.ones(x.shape[:-1] + (1,)), x], axis=-1)
            out = ACTIVATIONS[self.activation](x1 @ self.Y)
        else:
            out = np.asarray(self.features(x), dtype=float)
        if self.bias:
            out = np.concatenate([np.ones(out.shape[:-1] + (1,)), out], axis=-1)
        return out


@dataclass
class IdentifierState:
    x_hat: np.ndarray
    theta_hat: np.ndarray           # (dim, n)
    k: float
    k_theta: float
    Gamma_theta: np.ndarray         # diagonal (dim, dim)

    def __post_init__(self):
        if self.k < 0 or self.k_theta < 0:
            raise ValueError("identifier gains k and k_theta must be nonnegative (0 disables the term)")
        diag = np.diag(self.Gamma_theta)
        if not np.allclose(self.Gamma_theta, np.diag(diag)) or np.any(diag <= 0):
            raise ValueError("Gamma_theta must be diagonal with positive entries")


@dataclass
class HistoryStack:
    """
    Recorded experience for the concurrent-learning term.

    Features σ_j and regression targets ẋ̄_j − g_j u_j are cached at record
    time, so gram() and cross() never re-evaluate the basis.
    """
    capacity: int
    dim: int
    n: int
    m: int
    d_bar: float = 0.0
    min_separation: float = 0.0
    xs: list[np.ndarray] = field(default_factory=list)
    us: list[np.ndarray] = field(default_factory=list)
    xdots: list[np.ndarray] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    _sigmas: list[np.ndarray] = field(default_factory=list, repr=False)
    _targets: list[np.ndarray] = field(default_factory=list, repr=False)
    replacements: int = 0

    def __len__(self) -> int:
        return len(self.xs)

    @property
    def full(self) -> bool:
        return len(self.xs) >= self.capacity

    @property
    def sigmas(self) -> np.ndarray:
        return np.array(self._sigmas).reshape(len(self._sigmas), self.dim)

    @property
    def targets(self) -> np.ndarray:
        """ẋ̄_j − g(x_j)u_j per entry, shape (len, n)."""
        return np.array(self._targets).reshape(len(self._targets), self.n)

    def gram(self) -> np.ndarray:
        s = self.sigmas
        return s.T @ s

    def cross(self) -> np.ndarray:
        return self.sigmas.T @ self.targets

    def _put(self, idx: int | None, t, x, u, xdot, sigma, target) -> None:
        row = (x, u, xdot, float(t), sigma, target)
        lists = (self.xs, self.us, self.xdots, self.times, self._sigmas, self._targets)
        for lst, val in zip(lists, row):
            if idx is None:
                lst.append(val)
            else:
                lst[idx] = val


def sigma_theta(basis: IdentifierBasis, zeta) -> np.ndarray:
    """σ_θ(ζ) = σ_f at the reconstructed plant state x = e + x_d."""
    e, x_d = split_zeta(zeta, basis.n)
    return basis.evaluate(e + x_d)


def identifier_xdot(x, x_hat, zeta, u, state: IdentifierState, *,
                    basis: IdentifierBasis, g: Evaluator) -> np.ndarray:
    """x̂̇ = θ̂ᵀσ_θ(ζ) + g(x)u + k(x − x̂)."""
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return (state.theta_hat.T @ sigma_theta(basis, zeta)
            + g(x) @ u
            + state.k * (x - np.asarray(x_hat, dtype=float)))


def theta_dot(state: IdentifierState, x, x_hat, stack: HistoryStack, *,
              basis: IdentifierBasis) -> np.ndarray:
    """
    θ̂̇ = Γ_θ σ_f(x) x̃ᵀ + k_θ Γ_θ Σ_j σ_j (ẋ̄_j − g_j u_j − θ̂ᵀσ_j)ᵀ.

    An empty stack contributes nothing to the second term.
    """
    x = np.asarray(x, dtype=float)
    x_tilde = x - np.asarray(x_hat, dtype=float)
    out = np.outer(basis.evaluate(x), x_tilde)
    if len(stack):
        out = out + state.k_theta * (stack.cross() - stack.gram() @ state.theta_hat)
    return state.Gamma_theta @ out


def excitation_level(stack: HistoryStack) -> float:
    """λ_min(Σ σ_j σ_jᵀ); 0 for an empty stack."""
    if not len(stack):
        return 0.0
    return max(float(np.linalg.eigvalsh(stack.gram())[0]), 0.0)


class DerivativeBuffer:
    """Ring buffer of the last w uniformly spaced (t, x, u) samples, w odd."""

    def __init__(self, w: int = 3):
        if w < 3 or w % 2 == 0:
            raise ValueError("derivative window must be odd and at least 3")
        self.w = w
        self._samples: deque[tuple[float, np.ndarray, np.ndarray]] = deque(maxlen=w)

    def __len__(self) -> int:
        return len(self._samples)

    @property
    def ready(self) -> bool:
        return len(self._samples) == self.w

    def push(self, t: float, x, u) -> None:
        if self._samples and t <= self._samples[-1][0]:
            raise NonuniformSpacing(
                f"timestamps must increase: {t!r} after {self._samples[-1][0]!r}")
        self._samples.append((float(t),
                              np.array(x, dtype=float),
                              np.atleast_1d(np.array(u, dtype=float))))

    def center(self) -> tuple[float, np.ndarray, np.ndarray]:
        if not self.ready:
            raise BufferNotReady(f"need {self.w} samples, have {len(self._samples)}")
        return self._samples[self.w // 2]

    def times(self) -> np.ndarray:
        return np.array([s[0] for s in self._samples])

    def states(self) -> np.ndarray:
        return np.array([s[1] for s in self._samples])


@functools.lru_cache(maxsize=None)
def central_weights(w: int) -> np.ndarray:
    """Weights c with Σ c_i s_i^k = [k == 1] for offsets s = −h..h, i.e. exact for degree < w."""
    h = w // 2
    offsets = np.arange(-h, h + 1, dtype=float)
    vander = np.vander(offsets, w, increasing=True).T
    rhs = np.zeros(w)
    rhs[1] = 1.0
    c = np.linalg.solve(vander, rhs)
    c.setflags(write=False)
    return c


def numeric_derivative(buffer: DerivativeBuffer) -> np.ndarray:
    """Central finite difference of order w−1 at the middle sample."""
    if not buffer.ready:
        raise BufferNotReady(f"need {buffer.w} samples, have {len(buffer)}")
    ts = buffer.times()
    dt = (ts[-1] - ts[0]) / (buffer.w - 1)
    expected = ts[0] + dt * np.arange(buffer.w)
    if np.max(np.abs(ts - expected)) > SPACING_TOL:
        raise NonuniformSpacing(
            f"samples deviate {np.max(np.abs(ts - expected)):.3e} from a uniform grid")
    return central_weights(buffer.w) @ buffer.states() / dt


def record_experience(stack: HistoryStack, buffer: DerivativeBuffer, u=None, *,
                      basis: IdentifierBasis, g: Evaluator) -> HistoryStack:
    """
    Offer the buffer's centre sample to the stack.

    Appends while the stack has room. Once full, the candidate replaces the
    entry whose removal maximises λ_min of the resulting Gram matrix, and
    only if that strictly beats the current λ_min. The control defaults to
    the one recorded at the centre time.
    """
    t_c, x_c, u_c = buffer.center()
    if u is not None:
        u_c = np.atleast_1d(np.asarray(u, dtype=float))
    xdot = numeric_derivative(buffer)
    sigma = basis.evaluate(x_c)
    target = xdot - g(x_c) @ u_c

    if stack.min_separation > 0 and len(stack):
        gap = np.min(np.linalg.norm(stack.sigmas - sigma, axis=1))
        if gap < stack.min_separation:
            return stack

    if not stack.full:
        stack._put(None, t_c, x_c, u_c, xdot, sigma, target)
        if stack.full:
            log.info("History stack full (%d entries) at t=%.4g, excitation %.4g",
                     stack.capacity, t_c, excitation_level(stack))
        return stack

    current = excitation_level(stack)
    sig = stack.sigmas
    base = sig.T @ sig + np.outer(sigma, sigma)
    trial = base[None, :, :] - np.einsum("ji,jk->jik", sig, sig)
    levels = np.linalg.eigvalsh(trial)[:, 0]
    best = int(np.argmax(levels))
    if levels[best] > current:
        stack._put(best, t_c, x_c, u_c, xdot, sigma, target)
        stack.replacements += 1
        log.debug("Stack slot %d replaced at t=%.4g: excitation %.4g -> %.4g",
                  best, t_c, current, levels[best])
    return stack


def identifier_lyapunov(x_tilde, theta_tilde, Gamma_theta) -> float:
    """V₀ = ½x̃ᵀx̃ + ½tr(θ̃ᵀΓ_θ⁻¹θ̃)."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    inv_diag = 1.0 / np.diag(Gamma_theta)
    return 0.5 * float(x_tilde @ x_tilde) + 0.5 * float(
        np.sum(inv_diag[:, None] * theta_tilde * theta_tilde))


def d_bar_theta(stack: HistoryStack, d_bar: float, eps_theta_bar: float = 0.0) -> float:
    """Bound on ‖Σ_j σ_j (d_j + ε_θj)ᵀ‖ from per-entry derivative and reconstruction errors."""
    if not len(stack):
        return 0.0
    return float(np.sum(np.linalg.norm(stack.sigmas, axis=1)) * (d_bar + eps_theta_bar))
