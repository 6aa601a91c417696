"""Alternating optimization of beamformers, reflection gains and noise factor.

Each iteration updates, in order: the log-transform auxiliaries zeta, the
quadratic-transform auxiliaries chi, the noise factor eta, the beamformers
w, and the reflection vector theta.  Every update is the exact maximizer of
the surrogate objective R4 over its own block subject to the power budgets

    C1: sum_k ||w_k||^2 <= P_S
    C2: sum_k ||Diag(theta) H w_k||^2 + ||theta||^2 eta sigma_v^2 <= P_U
    C3: eta >= 1,

so R4 -- and through the closed-form auxiliary maximization also R3 -- is
non-decreasing across iterations; violations beyond 1e-9 raise hard errors.

Subproblem solvers
------------------
* w: concave quadratic with two ball/ellipsoid constraints.  Solved through
  its Lagrangian dual: for multipliers (l1, l2) the stationary point is
  w_a = (B_a + l1 I + l2 C)^-1 alpha_a per user; eigendecompositions turn
  the complementary-slackness conditions into scalar secular equations that
  nested bisection solves to machine precision.
* theta: concave quadratic with one ellipsoid constraint.  Whitening by the
  Cholesky factor of the constraint matrix reduces the multiplier search to
  the same secular equation.
* eta: the surrogate is a e^(xi t / 2) - b e^(xi t) - m e^t + const in
  t = ln eta with a unique stationary point; bracketed bisection finds it,
  then C2/C3 clamp.

Baselines: variant "M1" pins theta = 0 and eta = 1 (no reflector), "M2"
pins eta = 1 (reflector without controllable noise), "M3" runs all blocks.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import brentq

from .channels import ChannelSet
from .downlink import (
    BeamformerSet,
    ObjectiveWeights,
    all_sinrs,
    an_leakage,
    beam_projections,
    effective_channels,
    fp_quantities,
    objective_r3,
    objective_r4,
)
from .errors import DomainError, InfeasibleError, MonotonicityError
from .ris import ReflectionConfig, uaris_output_power

__all__ = [
    "VARIANTS",
    "SolverSettings",
    "OptimizerState",
    "update_zeta",
    "update_chi",
    "eta_stationary_point",
    "update_eta",
    "update_w",
    "update_theta",
    "solve_reflection_qp",
    "optimize",
    "write_trace_csv",
]

logger = logging.getLogger(__name__)

VARIANTS = ("M1", "M2", "M3")
_MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class SolverSettings:
    max_iters: int = 100
    rel_tol: float = 1e-4
    mu_tol: float = 1e-6
    qcqp_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if min(self.rel_tol, self.mu_tol, self.qcqp_tol) <= 0:
            raise DomainError("tolerances must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")


@dataclass
class OptimizerState:
    bf: BeamformerSet
    reflection: ReflectionConfig
    zeta: np.ndarray
    chi: np.ndarray
    r3_history: list[float] = field(default_factory=list)
    r4_history: list[float] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    iteration: int = 0
    converged: bool = False
    flags: list[str] = field(default_factory=list)


def update_zeta(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    weights: ObjectiveWeights,
    sigma2: float,
) -> np.ndarray:
    """Log-transform auxiliaries: the privacy-scaled SINRs.

    zeta_k = (eta sigma_v^2)^xi |hbar_k^H w_k|^2 / (sum_{a != k}
    |hbar_k^H w_a|^2 + ||g_k^H Theta||^2 eta sigma_v^2 + sigma^2).
    Joint maximization of R4 over (zeta, chi) at this value recovers R3.
    """
    _, interference, s, _ = fp_quantities(channels, config, bf, weights, sigma2)
    return s / interference


def update_chi(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    zeta: np.ndarray,
    weights: ObjectiveWeights,
    sigma2: float,
) -> np.ndarray:
    """Quadratic-transform auxiliaries: exact maximizers of R4 over chi.

    chi_k = sqrt(c (1 + zeta_k)) hbar_k^H w_k / q_k with c = (eta
    sigma_v^2)^xi and q_k the transform denominator.
    """
    x, _, _, q = fp_quantities(channels, config, bf, weights, sigma2)
    c = config.an_power_w ** weights.xi
    return np.sqrt(c * (1.0 + np.asarray(zeta, float))) * np.diag(x) / q


def _eta_terms(channels, config, bf, zeta, chi, weights):
    hbar = effective_channels(channels, config)
    x = beam_projections(hbar, bf.w)
    own = np.diag(x)
    chi = np.asarray(chi, dtype=complex)
    zeta = np.asarray(zeta, dtype=float)
    an_unit = np.sum(np.abs(config.theta)[None, :] ** 2 * np.abs(channels.g_ru) ** 2, axis=1)
    p_lin = float(np.sum(np.sqrt(1.0 + zeta) * np.real(np.conj(chi) * own)))
    m_own = float(np.sum(np.abs(chi) ** 2 * np.abs(own) ** 2))
    m_an = config.an_base_power_w * float(np.sum(np.abs(chi) ** 2 * an_unit))
    return p_lin, m_own, m_an


def eta_stationary_point(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    zeta: np.ndarray,
    chi: np.ndarray,
    weights: ObjectiveWeights,
) -> float | None:
    """Unique unconstrained maximizer of R4 over eta, or None if degenerate.

    In t = ln eta the derivative is proportional to
    psi(t) = a - b e^(xi t / 2) - m e^((1 - xi/2) t), which is strictly
    decreasing, so a bracketed bisection pins the root.
    """
    xi = weights.xi
    sv2 = config.an_base_power_w
    p_lin, m_own, m_an = _eta_terms(channels, config, bf, zeta, chi, weights)
    if xi == 0.0 or p_lin <= 0.0:
        return None
    a = xi * sv2 ** (xi / 2.0) * p_lin
    b = xi * sv2 ** xi * m_own
    m = m_an
    if b <= 0.0 and m <= 0.0:
        return None
    p_exp = xi / 2.0
    r_exp = 1.0 - xi / 2.0

    if m <= 0.0:
        return math.exp(math.log(a / b) / p_exp)

    def psi(t: float) -> float:
        val = a - m * math.exp(min(r_exp * t, 700.0))
        if b > 0.0:
            val -= b * math.exp(min(p_exp * t, 700.0))
        return val

    t_hi = math.log(a / m) / r_exp
    bounds = [math.log(a / (2.0 * m)) / r_exp]
    if b > 0.0:
        bounds.append(math.log(a / (2.0 * b)) / p_exp)
    t_lo = min(0.0, *bounds) - 1.0
    if psi(t_hi) > 0.0:  # b == 0 handled above; guard roundoff
        return math.exp(t_hi)
    for _ in range(200):
        mid = 0.5 * (t_lo + t_hi)
        if psi(mid) > 0.0:
            t_lo = mid
        else:
            t_hi = mid
    return math.exp(0.5 * (t_lo + t_hi))


def update_eta(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    zeta: np.ndarray,
    chi: np.ndarray,
    weights: ObjectiveWeights,
    sigma2: float,
) -> float:
    """Noise-factor update: stationary point clamped to [1, power cap].

    The cap keeps the reflector budget feasible at the current (theta, w):
    eta <= (P_U - sum_k ||Diag(theta) H w_k||^2) / (||theta||^2 sigma_v^2).
    With theta = 0 the budget is vacuous and the stationary point is only
    clamped from below (logged, since R4 is then unbounded in eta for
    xi > 0).
    """
    eta_star = eta_stationary_point(channels, config, bf, zeta, chi, weights)
    if eta_star is None:
        return 1.0
    theta_norm2 = float(np.sum(np.abs(config.theta) ** 2))
    if theta_norm2 == 0.0:
        logger.warning("eta update with theta = 0: C2 vacuous, clamping to [1, 1e12]")
        return float(min(max(eta_star, 1.0), 1e12))
    signal = bf.w @ channels.H.T * config.theta[None, :]
    used = float(np.sum(np.abs(signal) ** 2))
    cap = (weights.p_u_max - used) / (theta_norm2 * config.an_base_power_w)
    cap = max(cap, 1.0)
    return float(min(max(eta_star, 1.0), cap))


def _secular_root(evals: np.ndarray, coeffs: np.ndarray, target: float) -> float:
    """Unique lambda >= 0 with sum coeffs / (evals + lambda)^2 = target.

    evals >= 0 and coeffs >= 0; the left side is strictly decreasing, so in
    the standard 1/sqrt reparametrization a safeguarded Newton iteration
    converges monotonically to machine precision.
    """
    evals = np.maximum(np.asarray(evals, float).ravel(), 0.0)
    coeffs = np.asarray(coeffs, float).ravel()
    keep = coeffs > 0.0
    e, c = evals[keep], coeffs[keep]
    if e.size == 0:
        return 0.0
    if e.min() > 0.0 and float(np.sum(c / e**2)) <= target:
        return 0.0
    g_target = 1.0 / math.sqrt(target)
    lo, hi = 0.0, math.sqrt(float(np.sum(c)) / target)
    lam = 0.5 * (lo + hi) if e.min() == 0.0 else 0.0
    for _ in range(80):
        d = e + lam
        v = float(np.sum(c / d**2))
        if abs(v - target) <= 1e-13 * target:
            return lam
        if v > target:
            lo = lam
        else:
            hi = lam
        g = 1.0 / math.sqrt(v)
        gp = float(np.sum(c / d**3)) * g**3
        new = lam + (g_target - g) / gp
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - lam) <= 1e-16 * max(1.0, abs(lam)):
            return lam
        lam = new
    return lam


def _solve_w_qcqp(
    alpha: np.ndarray,
    b_blocks: np.ndarray,
    c_mat: np.ndarray,
    p_s: float,
    budget2: float,
) -> tuple[np.ndarray, float, float]:
    """max_w Re{2 alpha^H w} - sum_a w_a^H B_a w_a
    s.t. sum ||w_a||^2 <= p_s and sum w_a^H C w_a <= budget2.

    Dual multipliers found by nested bisection: the inner secular equation
    fixes l1 (source budget) for each l2, and the outer bisection drives
    the reflector-budget value, which is nonincreasing along the inner-
    optimal path, onto its target.
    """
    use_c = float(np.linalg.norm(c_mat)) > 0.0

    def inner(lam2: float):
        mats = b_blocks + lam2 * c_mat[None, :, :]
        ev, q = np.linalg.eigh(mats)
        ev = np.maximum(ev, 0.0)
        proj = np.einsum("kst,ks->kt", np.conj(q), alpha)
        lam1 = _secular_root(ev, np.abs(proj) ** 2, p_s)
        denom = ev + lam1
        scaled = np.where(denom > 0.0, proj / np.where(denom > 0.0, denom, 1.0), 0.0)
        w = np.einsum("kts,ks->kt", q, scaled)
        return w, lam1

    def c_power(w: np.ndarray) -> float:
        return float(np.real(np.einsum("at,ts,as->", np.conj(w), c_mat, w)))

    w, lam1 = inner(0.0)
    if not use_c or c_power(w) <= budget2 + 1e-14 * max(budget2, p_s):
        return w, lam1, 0.0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        w, _ = inner(hi)
        if c_power(w) <= budget2:
            break
        lo, hi = hi, hi * 2.0
    else:
        logger.warning("reflector-budget multiplier bracket exhausted")
    lam2 = brentq(
        lambda lam: c_power(inner(lam)[0]) - budget2, lo, hi,
        xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=200,
    )
    w, lam1 = inner(lam2)
    if c_power(w) > budget2:  # land on the feasible side of the root
        lam2 = lam2 * (1.0 + 4.0 * np.finfo(float).eps) + 1e-300
        w, lam1 = inner(lam2)
    return w, lam1, lam2


def update_w(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    zeta: np.ndarray,
    chi: np.ndarray,
    weights: ObjectiveWeights,
    sigma2: float,
    settings: SolverSettings | None = None,
) -> BeamformerSet:
    """Beamformer update: exact solution of the two-constraint QCQP.

    The objective is the w-dependent part of R4: linear coefficients
    alpha_a = sqrt(c (1 + zeta_a)) chi_a hbar_a and per-user quadratics
    B_a = sum_k |chi_k|^2 hbar_k hbar_k^H + (c - 1) |chi_a|^2 hbar_a
    hbar_a^H (the own-beam term carries the privacy scaling c).
    """
    hbar = effective_channels(channels, config)
    k = bf.num_users
    zeta = np.asarray(zeta, float)
    chi = np.asarray(chi, complex)
    c = config.an_power_w ** weights.xi
    alpha = (np.sqrt(c * (1.0 + zeta)) * chi)[:, None] * hbar
    outer_products = np.einsum("kt,ks->kts", hbar, np.conj(hbar))
    b_common = np.einsum("k,kts->ts", np.abs(chi) ** 2, outer_products)
    b_blocks = np.broadcast_to(b_common, (k,) + b_common.shape).copy()
    for a in range(k):
        b_blocks[a] = b_blocks[a] + (c - 1.0) * np.abs(chi[a]) ** 2 * outer_products[a]

    theta_h = config.theta[:, None] * channels.H
    c_mat = theta_h.conj().T @ theta_h
    noise_power = float(np.sum(np.abs(config.theta) ** 2)) * config.an_power_w
    budget2 = weights.p_u_max - noise_power
    if budget2 < -1e-12 * weights.p_u_max:
        raise InfeasibleError(
            "reflector noise power alone exceeds the budget", constraint="C2"
        )
    w, _, _ = _solve_w_qcqp(alpha, b_blocks, c_mat, weights.p_s_max, max(budget2, 0.0))
    return BeamformerSet(w)


def _woodbury_solve(dvec: np.ndarray, factors: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """(Diag(dvec) + factors factors^H)^-1 rhs for dvec > 0."""
    di = 1.0 / dvec
    scaled = di[:, None] * factors
    gram = np.eye(factors.shape[1], dtype=complex) + factors.conj().T @ scaled
    sol = np.linalg.solve(gram, factors.conj().T @ (di * rhs))
    return di * rhs - scaled @ sol


def _solve_theta_diag_lowrank(
    v: np.ndarray,
    lam_diag: np.ndarray,
    factors: np.ndarray,
    psi_diag: np.ndarray,
    p_max: float,
) -> tuple[np.ndarray, float]:
    """Reflection subproblem with Lam = Diag(lam_diag) + factors factors^H
    and a diagonal constraint matrix Psi = Diag(psi_diag).

    Same optimum as solve_reflection_qp but each multiplier evaluation is a
    Woodbury solve, so no M x M factorization is needed.
    """
    if float(np.linalg.norm(v)) == 0.0:
        return np.zeros_like(v), 0.0

    def theta_of(mu: float) -> np.ndarray:
        return _woodbury_solve(lam_diag + mu * psi_diag, factors, v)

    def power(theta: np.ndarray) -> float:
        return float(np.sum(psi_diag * np.abs(theta) ** 2))

    if lam_diag.min() > 0.0:
        theta0 = theta_of(0.0)
        if power(theta0) <= p_max:
            return theta0, 0.0
        lo = 0.0
    else:
        lo = 1e-300  # Lam singular: the budget must bind
    hi = 1.0
    for _ in range(300):
        if power(theta_of(hi)) <= p_max:
            break
        lo, hi = hi, hi * 2.0
    else:
        logger.warning("reflection multiplier bracket exhausted")
    mu = brentq(
        lambda m: power(theta_of(m)) - p_max, lo, hi,
        xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=200,
    )
    theta = theta_of(mu)
    if power(theta) > p_max:
        mu = mu * (1.0 + 4.0 * np.finfo(float).eps) + 1e-300
        theta = theta_of(mu)
    return theta, float(mu)


def solve_reflection_qp(
    v: np.ndarray,
    lam_mat: np.ndarray,
    psi: np.ndarray,
    p_max: float,
    mu_tol: float = 1e-6,
) -> tuple[np.ndarray, float]:
    """max_theta Re{2 theta^H v} - theta^H Lam theta s.t. theta^H Psi theta <= p_max.

    Psi must be Hermitian positive definite.  Whitening theta = R^-H phi by
    the Cholesky factor Psi = R R^H reduces the constrained stationarity
    condition (Lam + mu Psi) theta = v to a secular equation in the
    whitened eigenbasis; the interior case returns mu = 0 exactly and the
    binding case satisfies |theta^H Psi theta - p_max| well inside
    mu_tol * p_max.
    """
    r = np.linalg.cholesky(psi)
    v_t = solve_triangular(r, v, lower=True, check_finite=False)
    x = solve_triangular(r, lam_mat, lower=True, check_finite=False)
    lam_t = solve_triangular(r, x.conj().T, lower=True, check_finite=False).conj().T
    lam_t = 0.5 * (lam_t + lam_t.conj().T)
    ev, q = np.linalg.eigh(lam_t)
    ev = np.maximum(ev, 0.0)
    proj = q.conj().T @ v_t
    mu = _secular_root(ev, np.abs(proj) ** 2, p_max)
    denom = ev + mu
    scaled = np.where(denom > 0.0, proj / np.where(denom > 0.0, denom, 1.0), 0.0)
    phi = q @ scaled
    theta = solve_triangular(r.conj().T, phi, lower=False, check_finite=False)
    return theta, float(mu)


def update_theta(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    zeta: np.ndarray,
    chi: np.ndarray,
    weights: ObjectiveWeights,
    sigma2: float,
    settings: SolverSettings | None = None,
) -> ReflectionConfig:
    """Reflection-vector update: exact solution of the constrained QP.

    Expanding hbar_k^H w_a = h_k^H w_a + theta^T m_ka with m_ka =
    Diag(g_k^H) H w_a collects the theta-dependent part of R4 into
    Re{2 theta^H v} - theta^H Lam theta with

      v   = sum_k sqrt(c (1+zeta_k)) chi_k m_kk^*
            - sum_{k,a} |chi_k|^2 c_ka (h_k^H w_a) m_ka^*
      Lam = sum_{k,a} |chi_k|^2 c_ka m_ka^* m_ka^T
            + eta sigma_v^2 sum_k |chi_k|^2 Diag(|g_k|^2)

    (c_ka is the privacy scaling c on the own beam a = k and 1 otherwise),
    under the budget theta^H Psi theta <= P_U with Psi = sum_k
    Diag(|H w_k|^2) + eta sigma_v^2 I.
    """
    k = bf.num_users
    zeta = np.asarray(zeta, float)
    chi = np.asarray(chi, complex)
    c = config.an_power_w ** weights.xi
    g = channels.g_ru
    hw = bf.w @ channels.H.T  # rows H w_a
    m = np.conj(g)[:, None, :] * hw[None, :, :]  # (K, K, M) m_ka
    x_direct = np.einsum("kt,at->ka", np.conj(channels.h_direct), bf.w)

    c_ka = np.ones((k, k))
    np.fill_diagonal(c_ka, c)
    w_ka = np.abs(chi[:, None]) ** 2 * c_ka
    mdiag = m[np.arange(k), np.arange(k)]
    v = np.einsum("k,km->m", np.sqrt(c * (1.0 + zeta)) * chi, np.conj(mdiag))
    v -= np.einsum("ka,kam->m", w_ka * x_direct, np.conj(m))
    lam_diag = config.an_power_w * np.einsum("k,km->m", np.abs(chi) ** 2, np.abs(g) ** 2)
    factors = (np.sqrt(w_ka)[:, :, None] * np.conj(m)).reshape(k * k, -1).T  # (M, K^2)
    psi_diag = np.sum(np.abs(hw) ** 2, axis=0) + config.an_power_w

    theta, _ = _solve_theta_diag_lowrank(v, lam_diag, factors, psi_diag, weights.p_u_max)
    return config.with_theta(theta)


def _initial_state(
    channels: ChannelSet,
    weights: ObjectiveWeights,
    settings: SolverSettings,
    variant: str,
    an_base_power_w: float,
) -> tuple[BeamformerSet, ReflectionConfig]:
    t, m, k, _ = channels.dims
    rng = np.random.default_rng(settings.seed)
    if variant == "M1":
        reflection = ReflectionConfig(np.zeros(m, dtype=complex), 1.0, an_base_power_w)
        hbar = effective_channels(channels, reflection)
        w = np.sqrt(weights.p_s_max / k) * hbar / np.linalg.norm(hbar, axis=1, keepdims=True)
        return BeamformerSet(w), reflection

    theta = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=m))
    reflection = ReflectionConfig(theta, 1.0, an_base_power_w)
    bf = None
    for _ in range(3):  # fixed-point sweeps: w aligns to hbar(theta), theta re-scales
        hbar = effective_channels(channels, reflection)
        w = np.sqrt(weights.p_s_max / k) * hbar / np.linalg.norm(hbar, axis=1, keepdims=True)
        bf = BeamformerSet(w)
        power = uaris_output_power(reflection, channels.H, bf.w)
        scale = math.sqrt(0.9 * weights.p_u_max / power)
        reflection = reflection.with_theta(scale * reflection.theta)
    return bf, reflection


def _assert_feasible(channels, reflection, bf, weights, where: str):
    if bf.total_power > weights.p_s_max * (1.0 + 1e-9):
        raise InfeasibleError(f"source power budget violated after {where}", constraint="C1")
    if reflection.noise_factor < 1.0:
        raise InfeasibleError(f"noise factor below one after {where}", constraint="C3")
    power = uaris_output_power(reflection, channels.H, bf.w)
    if power > weights.p_u_max * (1.0 + 1e-9) + 1e-30:
        raise InfeasibleError(f"reflector power budget violated after {where}", constraint="C2")


def optimize(
    channels: ChannelSet,
    weights: ObjectiveWeights,
    settings: SolverSettings | None = None,
    variant: str = "M3",
    sigma2: float = 1e-9,
    an_base_power_w: float = 1e-9,
    initial: tuple[BeamformerSet, ReflectionConfig] | None = None,
) -> OptimizerState:
    """Run the alternating optimizer until R3 stalls or max_iters.

    variant selects which blocks move: "M1" (no reflector: theta = 0,
    eta = 1), "M2" (reflector, eta pinned to 1) or "M3" (all blocks).
    r3_history starts with the value at the feasible initialization and is
    non-decreasing within 1e-9; any larger drop raises MonotonicityError.

    initial warm-starts from an explicit feasible (beamformers,
    reflection) pair, e.g. a poorer variant's solution, instead of the
    default initializer; it must respect the variant's pinned blocks.
    """
    if variant not in VARIANTS:
        raise DomainError(f"unknown variant {variant!r}")
    settings = settings or SolverSettings()
    t, m, k, _ = channels.dims
    if k < 1 or m < 1:
        raise DomainError("degenerate scenario dimensions")

    if initial is not None:
        bf, reflection = initial
        if variant == "M1" and np.any(reflection.theta != 0):
            raise DomainError("variant M1 requires theta = 0 in the initial state")
        if variant != "M3" and reflection.noise_factor != 1.0:
            raise DomainError(f"variant {variant} requires eta = 1 in the initial state")
    else:
        bf, reflection = _initial_state(channels, weights, settings, variant, an_base_power_w)
    _assert_feasible(channels, reflection, bf, weights, "initialization")
    state = OptimizerState(
        bf=bf,
        reflection=reflection,
        zeta=np.zeros(k),
        chi=np.zeros(k, dtype=complex),
    )
    r3 = objective_r3(channels, reflection, bf, weights, sigma2)
    state.r3_history.append(r3)
    _record_trace(state, channels, weights, sigma2, r4=None)

    for it in range(1, settings.max_iters + 1):
        state.iteration = it
        state.zeta = update_zeta(channels, state.reflection, state.bf, weights, sigma2)
        state.chi = update_chi(channels, state.reflection, state.bf, state.zeta, weights, sigma2)
        if variant == "M3":
            eta = update_eta(
                channels, state.reflection, state.bf, state.zeta, state.chi, weights, sigma2
            )
            state.reflection = state.reflection.with_noise_factor(eta)
        state.bf = update_w(
            channels, state.reflection, state.bf, state.zeta, state.chi, weights, sigma2, settings
        )
        if variant != "M1":
            state.reflection = update_theta(
                channels, state.reflection, state.bf, state.zeta, state.chi,
                weights, sigma2, settings,
            )
        _assert_feasible(channels, state.reflection, state.bf, weights, f"iteration {it}")

        r3_prev = state.r3_history[-1]
        r3 = objective_r3(channels, state.reflection, state.bf, weights, sigma2)
        if r3 < r3_prev - _MONOTONE_TOL * max(1.0, abs(r3_prev)):
            raise MonotonicityError(
                f"R3 decreased from {r3_prev!r} to {r3!r} at iteration {it}"
            )
        state.r3_history.append(r3)
        r4 = objective_r4(
            channels, state.reflection, state.bf, state.zeta, state.chi, weights, sigma2
        )
        state.r4_history.append(r4)
        _record_trace(state, channels, weights, sigma2, r4=r4)
        if abs(r3 - r3_prev) <= settings.rel_tol * max(1.0, abs(r3_prev)):
            state.converged = True
            break
    return state


def _record_trace(state: OptimizerState, channels, weights, sigma2, r4):
    state.trace.append({
        "iteration": state.iteration,
        "r3": state.r3_history[-1],
        "r4": r4 if r4 is not None else float("nan"),
        "eta": state.reflection.noise_factor,
        "source_power": state.bf.total_power,
        "uaris_power": uaris_output_power(state.reflection, channels.H, state.bf.w),
    })


def write_trace_csv(state: OptimizerState, path) -> None:
    """Per-iteration optimizer trace."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "r3", "r4", "eta", "source_power_w", "uaris_power_w"])
        for row in state.trace:
            writer.writerow([
                row["iteration"], repr(row["r3"]), repr(row["r4"]),
                repr(row["eta"]), repr(row["source_power"]), repr(row["uaris_power"]),
            ])
