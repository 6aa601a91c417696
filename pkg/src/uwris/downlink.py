"""Legitimate-link quality: effective channels, per-user SINR, sum rate,
and the merit functions used by the joint optimizer.

The privacy-weighted rate is

    R3 = sum_k log2(1 + gamma_k * (eta sigma_v^2)^xi)

where gamma_k is the usual SINR and xi in [0, 1) trades rate against the
injected-noise level.  R4 is the equivalent concave reformulation of R3
obtained from the fractional-programming transforms (one auxiliary zeta_k
from the log, one chi_k from the quadratic transform of the SINR ratio);
maximizing R4 over (zeta, chi) in closed form recovers R3 exactly, which is
what makes the alternating optimizer's merit non-decreasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet
from .errors import DimensionError, DomainError
from .ris import ReflectionConfig

__all__ = [
    "BeamformerSet",
    "ObjectiveWeights",
    "effective_channel",
    "effective_channels",
    "beam_projections",
    "an_leakage",
    "sinr",
    "sum_rate",
    "all_sinrs",
    "objective_r1",
    "objective_r2",
    "objective_r3",
    "objective_r4",
    "fp_quantities",
]

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class BeamformerSet:
    """Per-user transmit beamformers, one length-T row per user."""

    w: np.ndarray  # (K, T) complex

    def __post_init__(self):
        w = np.asarray(self.w, dtype=complex)
        if w.ndim != 2:
            raise DimensionError("beamformers must be a (K, T) array")
        object.__setattr__(self, "w", w)

    @property
    def num_users(self) -> int:
        return self.w.shape[0]

    @property
    def stacked(self) -> np.ndarray:
        """Length T*K concatenation [w_1; ...; w_K]."""
        return self.w.reshape(-1)

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.w) ** 2))

    def is_feasible(self, p_s_max: float, rel_slack: float = 1e-8) -> bool:
        return self.total_power <= p_s_max * (1.0 + rel_slack)


@dataclass(frozen=True)
class ObjectiveWeights:
    """Privacy weight and the two power budgets.

    xi is the per-user privacy weight (xi_0 / K in the weighted objective);
    it must be small compared to 1.  p_s_max / p_u_max are the source and
    reflector power budgets in watts.
    """

    xi: float
    p_s_max: float
    p_u_max: float

    def __post_init__(self):
        if not (0.0 <= self.xi < 1.0):
            raise DomainError("xi must lie in [0, 1)")
        if self.p_s_max <= 0 or self.p_u_max < 0:
            raise DomainError("power budgets must be positive")


def effective_channel(h_k: np.ndarray, g_k: np.ndarray, theta: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Effective source->receiver channel through the reflector.

    Returns the column vector hbar_k whose conjugate transpose is
    h_k^H + g_k^H Diag(theta) H; with theta = 0 this is just h_k.
    """
    h_k = np.asarray(h_k, dtype=complex).reshape(-1)
    g_k = np.asarray(g_k, dtype=complex).reshape(-1)
    theta = np.asarray(theta, dtype=complex).reshape(-1)
    H = np.asarray(H, dtype=complex)
    if H.shape != (g_k.size, h_k.size):
        raise DimensionError("H must be (M, T) matching g_k and h_k")
    if theta.size != g_k.size:
        raise DimensionError("theta and g_k lengths differ")
    return h_k + H.conj().T @ (np.conj(theta) * g_k)


def effective_channels(channels: ChannelSet, config: ReflectionConfig) -> np.ndarray:
    """(K, T) matrix with row k = hbar_k."""
    weighted = np.conj(config.theta)[None, :] * channels.g_ru  # rows Theta^H g_k
    return channels.h_direct + weighted @ np.conj(channels.H)


def beam_projections(hbar: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(K, K) matrix of projections X[k, a] = hbar_k^H w_a."""
    return np.einsum("kt,at->ka", np.conj(hbar), w)


def an_leakage(channels: ChannelSet, config: ReflectionConfig) -> np.ndarray:
    """(K,) injected-noise power at each receiver: ||g_k^H Theta||^2 eta sigma_v^2."""
    gains = np.abs(config.theta)[None, :] ** 2 * np.abs(channels.g_ru) ** 2
    return config.an_power_w * np.sum(gains, axis=1)


def all_sinrs(channels: ChannelSet, config: ReflectionConfig, bf: BeamformerSet, sigma2: float) -> np.ndarray:
    """(K,) per-user SINRs."""
    hbar = effective_channels(channels, config)
    x = beam_projections(hbar, bf.w)
    an = an_leakage(channels, config)
    p = np.abs(x) ** 2
    signal = np.diag(p)
    interference = p.sum(axis=1) - signal
    return signal / (interference + an + sigma2)


def sinr(k: int, channels: ChannelSet, config: ReflectionConfig, bf: BeamformerSet, sigma2: float) -> float:
    """SINR of user k (0-based index)."""
    gammas = all_sinrs(channels, config, bf, sigma2)
    if not (0 <= k < gammas.size):
        raise DomainError(f"user index {k} out of range")
    return float(gammas[k])


def sum_rate(gammas) -> float:
    """Sum rate in bits/s/Hz from per-user SINRs."""
    g = np.asarray(gammas, dtype=float)
    if np.any(g < 0):
        raise DomainError("SINRs must be nonnegative")
    return float(np.sum(np.log2(1.0 + g)))


def fp_quantities(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    weights: ObjectiveWeights,
    sigma2: float,
):
    """Common quantities of the fractional-programming objective.

    Returns (x, interference, s, q) where x is the (K, K) projection matrix,
    interference[k] the SINR denominator of user k, s[k] the privacy-scaled
    own-beam power (eta sigma_v^2)^xi |x_kk|^2, and q[k] = interference[k]
    + s[k] the denominator of the quadratic transform.
    """
    hbar = effective_channels(channels, config)
    x = beam_projections(hbar, bf.w)
    an = an_leakage(channels, config)
    c = config.an_power_w ** weights.xi
    p = np.abs(x) ** 2
    own = np.diag(p)
    interference = p.sum(axis=1) - own + an + sigma2
    s = c * own
    return x, interference, s, interference + s


def objective_r1(gammas, crlb_position_bound: float) -> float:
    """Sum rate plus the magnitude of the position-error bound.

    Mixes bits/s/Hz with square meters; it is kept only as the raw
    multi-objective merit for post-hoc reporting, never optimized directly.
    """
    return sum_rate(gammas) + abs(float(crlb_position_bound))


def objective_r2(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    weights: ObjectiveWeights,
    sigma2: float,
) -> float:
    """Weighted rate-minus-privacy-penalty objective.

    sum_k [log2(1 + gamma_k) - xi log2(1 + 1/(eta sigma_v^2))].
    """
    gammas = all_sinrs(channels, config, bf, sigma2)
    penalty = weights.xi * math.log2(1.0 + 1.0 / config.an_power_w)
    return float(np.sum(np.log2(1.0 + gammas) - penalty))


def objective_r3(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    weights: ObjectiveWeights,
    sigma2: float,
) -> float:
    """Privacy-weighted sum rate sum_k log2(1 + gamma_k (eta sigma_v^2)^xi).

    With xi = 0 (or eta sigma_v^2 = 1) this equals the plain sum rate.
    """
    gammas = all_sinrs(channels, config, bf, sigma2)
    c = config.an_power_w ** weights.xi
    return float(np.sum(np.log2(1.0 + c * gammas)))


def objective_r4(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    zeta: np.ndarray,
    chi: np.ndarray,
    weights: ObjectiveWeights,
    sigma2: float,
) -> float:
    """Fractional-programming surrogate of R3 with auxiliaries (zeta, chi).

    R4 = sum_k log2(1 + zeta_k)
         + (1/ln 2) sum_k [ -zeta_k
                            + 2 sqrt(c (1 + zeta_k)) Re{chi_k^* x_kk}
                            - |chi_k|^2 q_k ]

    with c = (eta sigma_v^2)^xi, x_kk = hbar_k^H w_k and q_k the quadratic
    transform denominator from fp_quantities.  For any fixed (w, theta,
    eta), maximizing over (zeta, chi) gives back R3 exactly; the closed-form
    maximizers are the optimizer's auxiliary updates.
    """
    zeta = np.asarray(zeta, dtype=float).reshape(-1)
    chi = np.asarray(chi, dtype=complex).reshape(-1)
    if zeta.size != bf.num_users or chi.size != bf.num_users:
        raise DimensionError("zeta/chi must have one entry per user")
    if np.any(zeta <= -1.0):
        raise DomainError("zeta entries must exceed -1")
    x, _, _, q = fp_quantities(channels, config, bf, weights, sigma2)
    c = config.an_power_w ** weights.xi
    own = np.diag(x)
    cross = np.real(np.conj(chi) * own)
    linear = 2.0 * np.sqrt(c * (1.0 + zeta)) * cross
    value = np.log2(1.0 + zeta) + (-zeta + linear - np.abs(chi) ** 2 * q) / _LN2
    return float(np.sum(value))
