"""
Gain-condition diagnostics.

Sup-norms are sampled over a compact box χ of concatenated states (a
scrambled Halton sequence plus the box corners). Reconstruction errors
enter only through their configured bounds ε̄, ε̄′ and ε̄_θ, so every
ε-dependent supremum is a product of a bound and a sampled norm; with
all bounds at zero (exactly parameterized scenarios) those terms vanish.

The lower bounds Γ̲, σ̲_θ and c̲ are either assumed (gains_check.assumptions),
measured from a simulation run, or for c̲ computed on the extrapolation
grid at the true parameters.
"""
from __future__ import annotations

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from adptrack import adp
from adptrack.adp import ActorState, AdpContext, AdpGains
from adptrack.config import ScenarioConfig
from adptrack.errors import ConfigError
from adptrack.model import concat_dynamics, pseudoinverse
from adptrack.scenarios import Scenario
from adptrack.sim import build_grid, ideal_weights

log = logging.getLogger("adptrack.gains")


@dataclass
class SupNormEstimates:
    G_sigma: float = 0.0                    # ‖G_σ‖̄
    grad_sigma: float = 0.0                 # ‖σ′‖̄
    W_grad_G_gd: float = 0.0                # ‖Wᵀσ′Gg_d⁺‖̄
    eps_G_gd: float = 0.0                   # ‖ε′Gg_d⁺‖̄
    W_G_sigma: float = 0.0                  # ‖WᵀG_σ + ε′G_rσ′ᵀ‖̄
    Delta: float = 0.0                      # ‖Δ‖̄
    G_eps: float = 0.0                      # ‖G_ε‖̄
    half_W_grad_Gr_eps: float = 0.0         # ‖½Wᵀσ′G_rε′ᵀ‖̄
    W_grad_G_gd_eps_theta: float = 0.0      # ‖Wᵀσ′Gg_d⁺ε_θd‖̄
    eps_G_gd_eps_theta: float = 0.0         # ‖ε′Gg_d⁺ε_θd‖̄
    sigma_g: float = 0.0                    # ‖σ_θ‖̄ + ‖gg_d⁺‖̄‖σ_θd‖̄
    d_theta: float = 0.0                    # d̄_θ
    eps_theta_bar: float = 0.0
    W_bar: float = 0.0
    gamma_lb: float | None = None
    sigma_theta_lb: float | None = None
    cbar_lb: float | None = None
    rho_ball: float = 1.0
    q_lb: float = 0.0                       # Q(e) ≥ q_lb‖e‖²
    v_lo: float = 0.0                       # Wᵀσ(ζ) ≥ v_lo‖e‖²
    v_hi: float = 0.0                       # Wᵀσ(ζ) ≤ v_hi‖e‖²
    n_samples: int = 0
    sources: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ConditionResult:
    name: str
    lhs: float
    rhs: float
    passed: bool
    heuristic: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class GainReport:
    conditions: list[ConditionResult]
    estimates: SupNormEstimates
    iota: float | None = None
    iota_terms: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        """Hard conditions only; heuristic checks are reported but never fail a run."""
        return all(c.passed for c in self.conditions if not c.heuristic)

    def condition(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "conditions": [c.to_dict() for c in self.conditions],
            "iota": self.iota,
            "iota_terms": dict(self.iota_terms),
            "estimates": self.estimates.to_dict(),
        }


def _ratio(num: float, den: float) -> float:
    """num/den with 0/0 = 0 and x/0 = inf for x > 0."""
    if den > 0:
        return num / den
    return 0.0 if num == 0 else math.inf


def _sup(values: np.ndarray) -> float:
    return float(np.max(values)) if values.size else 0.0


def _mat_norms(mats: np.ndarray) -> np.ndarray:
    return np.linalg.norm(mats, ord=2, axis=(-2, -1))


def chi_bounds(cfg: ScenarioConfig, scenario: Scenario) -> np.ndarray:
    """[lo, hi] rows for e then x_d; defaults |e_i| ≤ 1 and |x_d,i| ≤ d."""
    n = scenario.problem.n
    chi = cfg.gains_check.chi
    d = scenario.problem.desired.d
    rows = []
    for part, default, path in ((chi.e, [[-1.0, 1.0]] * n, "gains_check.chi.e"),
                                (chi.x_d, [[-d, d]] * n, "gains_check.chi.x_d")):
        b = np.asarray(default if part is None else part, dtype=float)
        if b.shape != (n, 2):
            raise ConfigError(path, f"expected {n} [lo, hi] pairs")
        if np.any(b[:, 1] < b[:, 0]):
            raise ConfigError(path, "each pair must satisfy lo <= hi")
        rows.append(b)
    return np.vstack(rows)


def sample_chi(bounds: np.ndarray, n_samples: int, seed: int) -> np.ndarray:
    """Box corners followed by the first n_samples scrambled Halton points."""
    lo, hi = bounds[:, 0], bounds[:, 1]
    corners = np.array(list(itertools.product(*bounds)), dtype=float)
    engine = qmc.Halton(d=bounds.shape[0], scramble=True, seed=seed)
    return np.vstack([corners, lo + engine.random(n_samples) * (hi - lo)])


def _resolve_weights(scenario: Scenario, cfg: ScenarioConfig, W) -> np.ndarray:
    L = scenario.value_basis.L
    if W is None:
        W = ideal_weights(scenario)
    if W is None and cfg.gains_check.w is not None:
        W = cfg.gains_check.w
    if W is None:
        raise ConfigError("gains_check.w", f"{scenario.name} has no Riccati oracle; supply W")
    W = np.asarray(W, dtype=float).ravel()
    if W.shape != (L,):
        raise ConfigError("gains_check.w", f"expected {L} weights, got {W.size}")
    return W


def estimate_sup_norms(scenario: Scenario, cfg: ScenarioConfig, *, W=None,
                       n_samples: int | None = None, seed: int | None = None) -> SupNormEstimates:
    """Sampled suprema over χ of every quantity the gain conditions and ι use."""
    gc = cfg.gains_check
    n_samples = gc.n_samples if n_samples is None else n_samples
    seed = gc.seed if seed is None else seed
    problem = scenario.problem
    n, m = problem.n, problem.m
    W = _resolve_weights(scenario, cfg, W)
    eps_p, eps_th = gc.eps_prime_bar, gc.eps_theta_bar

    zetas = sample_chi(chi_bounds(cfg, scenario), n_samples, seed)
    e, x_d = zetas[:, :n], zetas[:, n:]
    x = e + x_d
    R_inv = problem.cost.R_inv

    grad = scenario.value_basis.grad(zetas)                         # (K, L, 2n)
    F, G = concat_dynamics(problem, zetas)                          # (K, 2n), (K, 2n, m)
    G_r = np.einsum("kam,mj,kbj->kab", G, R_inv, G)                 # (K, 2n, 2n)
    G_sigma = np.einsum("kla,kab,kqb->klq", grad, G_r, grad)        # (K, L, L)
    W_grad = np.einsum("l,kla->ka", W, grad)                        # (K, 2n)
    gd_pinv = pseudoinverse(problem.plant.g(x_d))                   # (K, m, n)
    G_gd = G @ gd_pinv                                              # (K, 2n, n)
    gg_d = problem.plant.g(x) @ gd_pinv                             # (K, n, n)

    mu_W = -0.5 * np.einsum("ij,kaj,ka->ki", R_inv, G, W_grad)
    closed = F + np.einsum("kam,km->ka", G, mu_W)

    n_W_grad_G_gd = np.linalg.norm(np.einsum("ka,kaj->kj", W_grad, G_gd), axis=-1)
    n_G_gd = _mat_norms(G_gd)
    n_G_r = _mat_norms(G_r)
    n_gg_d = _mat_norms(gg_d)
    n_W_grad_Gr = np.linalg.norm(np.einsum("ka,kab->kb", W_grad, G_r), axis=-1)
    n_W_Gs = np.linalg.norm(np.einsum("l,klq->kq", W, G_sigma), axis=-1)
    n_Gr_grad = _mat_norms(np.einsum("kab,klb->kal", G_r, grad))
    n_W_grad_e = np.linalg.norm(W_grad[:, :n], axis=-1)

    sig_x = np.linalg.norm(scenario.identifier_basis.evaluate(x), axis=-1)
    sig_xd = np.linalg.norm(scenario.identifier_basis.evaluate(x_d), axis=-1)

    e_sq = np.sum(e * e, axis=-1)
    nz = e_sq > 1e-12
    q_ratio = problem.cost.Q(e[nz]) / e_sq[nz]
    v_ratio = (scenario.value_basis.sigma(zetas[nz]) @ W) / e_sq[nz]

    stack = cfg.identifier.stack
    est = SupNormEstimates(
        G_sigma=_sup(_mat_norms(G_sigma)),
        grad_sigma=_sup(_mat_norms(grad)),
        W_grad_G_gd=_sup(n_W_grad_G_gd),
        eps_G_gd=eps_p * _sup(n_G_gd),
        W_G_sigma=_sup(n_W_Gs + eps_p * n_Gr_grad),
        Delta=_sup(eps_p * np.linalg.norm(closed, axis=-1) + 0.25 * eps_p ** 2 * n_G_r
                   + n_W_grad_e * eps_th * (1.0 + n_gg_d)),
        G_eps=eps_p ** 2 * _sup(n_G_r),
        half_W_grad_Gr_eps=0.5 * eps_p * _sup(n_W_grad_Gr),
        W_grad_G_gd_eps_theta=eps_th * _sup(n_W_grad_G_gd),
        eps_G_gd_eps_theta=eps_p * eps_th * _sup(n_G_gd),
        sigma_g=_sup(sig_x) + _sup(n_gg_d) * _sup(sig_xd),
        d_theta=stack.M * (stack.d_bar + eps_th) * _sup(sig_x),
        eps_theta_bar=eps_th,
        W_bar=float(np.linalg.norm(W)),
        gamma_lb=gc.assumptions.gamma_lb,
        sigma_theta_lb=gc.assumptions.sigma_theta_lb,
        cbar_lb=gc.assumptions.cbar_lb,
        rho_ball=gc.rho_ball,
        q_lb=float(np.min(q_ratio)) if q_ratio.size else 0.0,
        v_lo=float(np.min(v_ratio)) if v_ratio.size else 0.0,
        v_hi=float(np.max(v_ratio)) if v_ratio.size else 0.0,
        n_samples=int(zetas.shape[0]),
    )
    est.sources = {name: "assumed" for name in ("gamma_lb", "sigma_theta_lb", "cbar_lb")
                   if getattr(est, name) is not None}
    if est.cbar_lb is None and scenario.true_theta is not None:
        est.cbar_lb = grid_cbar_lb(scenario, cfg, W, np.unique(x_d, axis=0))
        est.sources["cbar_lb"] = "grid"
    log.info("Sampled %d points of χ: ‖G_σ‖=%.4g ‖σ′‖=%.4g σ̄_g=%.4g W̄=%.4g",
             est.n_samples, est.G_sigma, est.grad_sigma, est.sigma_g, est.W_bar)
    return est


def grid_cbar_lb(scenario: Scenario, cfg: ScenarioConfig, W: np.ndarray, x_d_points: np.ndarray) -> float:
    """
    min over desired states of cbar on the extrapolation grid, evaluated
    at the true drift weights with Ŵ_a = W and Γ = Γ̄I (largest ρ).
    """
    n = scenario.problem.n
    ctx = AdpContext(known=scenario.problem.known(), value_basis=scenario.value_basis,
                     identifier_basis=scenario.identifier_basis)
    grid = build_grid(cfg, n)
    if grid.strategy == "fixed_zeta":
        x_d_points = x_d_points[:1]
    Gamma = cfg.adp.gains.Gamma_bar * np.eye(ctx.L)
    actor = ActorState(W_a=W)
    return min(adp.cbar(ctx, grid, xd, scenario.true_theta, actor, Gamma, cfg.adp.gains.nu)
               for xd in x_d_points)


def with_measurements(est: SupNormEstimates, *, gamma_lb: float | None = None,
                      sigma_theta_lb: float | None = None,
                      cbar_lb: float | None = None) -> SupNormEstimates:
    """Copy of est with lower bounds taken from a simulation run."""
    updates = {k: v for k, v in (("gamma_lb", gamma_lb), ("sigma_theta_lb", sigma_theta_lb),
                                 ("cbar_lb", cbar_lb)) if v is not None}
    sources = {**est.sources, **{k: "measured" for k in updates}}
    return dataclasses.replace(est, sources=sources, **updates)


def _lb(value: float | None) -> float:
    return 0.0 if value is None else max(float(value), 0.0)


def check_sufficient_conditions(gains: AdpGains, est: SupNormEstimates, k_theta: float,
                                sigma_lb: float | None = None) -> GainReport:
    """
    Critic condition:  η_c2c̲ > 3(η_c2+η_c1)²W̄²‖σ′‖̄²σ̄_g² / (4k_θσ̲_θνΓ̲)
    Actor condition:   η_a1+η_a2 > 3a + 3(a+η_a1)²/(c̲η_c2),
                       a = (η_c1+η_c2)W̄‖G_σ‖̄ / (8√(νΓ̲))

    A missing lower bound counts as zero, which fails the condition it enters.
    """
    sig = _lb(est.sigma_theta_lb if sigma_lb is None else sigma_lb)
    gam, cb = _lb(est.gamma_lb), _lb(est.cbar_lb)
    eta_c = gains.eta_c1 + gains.eta_c2

    lhs18 = gains.eta_c2 * cb
    rhs18 = _ratio(3.0 * eta_c ** 2 * est.W_bar ** 2 * est.grad_sigma ** 2 * est.sigma_g ** 2,
                   4.0 * k_theta * sig * gains.nu * gam)
    a = _ratio(eta_c * est.W_bar * est.G_sigma, 8.0 * math.sqrt(gains.nu * gam))
    lhs19 = gains.eta_a1 + gains.eta_a2
    rhs19 = 3.0 * a + _ratio(3.0 * (a + gains.eta_a1) ** 2, cb * gains.eta_c2)

    conditions = [
        ConditionResult("critic_gain", lhs18, rhs18, lhs18 > rhs18),
        ConditionResult("actor_gain", lhs19, rhs19, lhs19 > rhs19),
    ]
    for c in conditions:
        log.info("%s: %.6g > %.6g %s", c.name, c.lhs, c.rhs, "PASS" if c.passed else "FAIL")
    return GainReport(conditions=conditions, estimates=est)


def iota_terms(gains: AdpGains, est: SupNormEstimates, k: float, k_theta: float,
               sigma_lb: float | None = None) -> dict[str, float]:
    """The additive terms of the ultimate-bound constant ι, by name."""
    sig = _lb(est.sigma_theta_lb if sigma_lb is None else sigma_lb)
    gam, cb = _lb(est.gamma_lb), _lb(est.cbar_lb)
    eta_c = gains.eta_c1 + gains.eta_c2
    root = math.sqrt(gains.nu * gam)

    A = (_ratio(eta_c * est.W_bar ** 2 * est.G_sigma, 16.0 * root)
         + est.W_G_sigma / 4.0 + gains.eta_a2 * est.W_bar / 2.0)
    identifier_num = (est.W_grad_G_gd + est.eps_G_gd) * est.sigma_g + k_theta * est.d_theta
    return {
        "actor": _ratio(3.0 * A ** 2, gains.eta_a1 + gains.eta_a2),
        "identifier": _ratio(3.0 * identifier_num ** 2, 4.0 * k_theta * sig),
        "critic": _ratio(eta_c ** 2 * est.Delta ** 2, 4.0 * gains.nu * gam * gains.eta_c2 * cb),
        "observer": _ratio(est.eps_theta_bar ** 2, 2.0 * k),
        "residual": (est.eps_G_gd_eps_theta + 0.5 * est.G_eps
                     + est.half_W_grad_Gr_eps + est.W_grad_G_gd_eps_theta),
    }


def estimate_iota(gains: AdpGains, est: SupNormEstimates, k: float, k_theta: float,
                  sigma_lb: float | None = None) -> float:
    return float(sum(iota_terms(gains, est, k, k_theta, sigma_lb).values()))


def set_size_condition(gains: AdpGains, est: SupNormEstimates, iota: float, *, k: float,
                       k_theta: float, gamma_theta: float, Gamma_bar: float,
                       sigma_lb: float | None = None) -> ConditionResult:
    """
    Whether the ultimate bound fits inside the ball of radius rho_ball,
    with every class-K function replaced by c·s².

    v_l uses the explicit coefficients min(q̲/2, η_c2c̲/8, (η_a1+η_a2)/6, k/4, k_θσ̲_θ/6);
    the sandwich bounds come from v_lo, v_hi and the gain matrices. The
    result is always marked heuristic.
    """
    sig = _lb(est.sigma_theta_lb if sigma_lb is None else sigma_lb)
    gam, cb = _lb(est.gamma_lb), _lb(est.cbar_lb)
    c_l = min(est.q_lb / 2.0, gains.eta_c2 * cb / 8.0, (gains.eta_a1 + gains.eta_a2) / 6.0,
              k / 4.0, k_theta * sig / 6.0)
    c_lo = min(est.v_lo, 1.0 / (2.0 * Gamma_bar), 0.5, 0.5 * min(1.0, 1.0 / gamma_theta))
    c_hi = max(est.v_hi, _ratio(1.0, 2.0 * gam), 0.5, 0.5 * max(1.0, 1.0 / gamma_theta))
    lhs = math.sqrt(_ratio(iota, c_l))
    rhs = math.sqrt(max(_ratio(c_lo, c_hi), 0.0)) * est.rho_ball
    return ConditionResult("set_size", lhs, rhs, lhs < rhs, heuristic=True)


def gain_report(cfg: ScenarioConfig, est: SupNormEstimates) -> GainReport:
    """Both hard conditions, ι with its terms, and the heuristic set-size check."""
    g = cfg.adp.gains
    gains = AdpGains(eta_c1=g.eta_c1, eta_c2=g.eta_c2, eta_a1=g.eta_a1, eta_a2=g.eta_a2,
                     nu=g.nu, beta=g.beta, Gamma_bar=g.Gamma_bar)
    ic = cfg.identifier
    report = check_sufficient_conditions(gains, est, ic.k_theta)
    report.iota_terms = iota_terms(gains, est, ic.k, ic.k_theta)
    report.iota = float(sum(report.iota_terms.values()))
    report.conditions.append(set_size_condition(
        gains, est, report.iota, k=ic.k, k_theta=ic.k_theta, gamma_theta=ic.gamma_theta,
        Gamma_bar=g.Gamma_bar))
    return report
