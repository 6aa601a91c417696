"""Active reflecting surface: reflection vector, injected-noise statistics,
and the output-power accounting behind the reflector power budget.

The surface applies a per-element complex gain theta_m = p_m e^{j theta_m}
to the incident field and adds a zero-mean circular Gaussian noise of
per-element power eta * sigma_v^2, where eta >= 1 is the controllable
noise factor.  The diagonal gain matrix is never materialized; everything
works entry-wise on the gain vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

__all__ = ["ReflectionConfig", "reflect", "en_noise_variance", "uaris_output_power"]


@dataclass(frozen=True)
class ReflectionConfig:
    """Reflection gain vector plus noise settings of the surface.

    theta           (M,) complex per-element gains
    noise_factor    eta >= 1, scales the injected noise power
    an_base_power_w sigma_v^2 > 0, base noise power in watts
    """

    theta: np.ndarray
    noise_factor: float = 1.0
    an_base_power_w: float = 1e-9

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=complex).reshape(-1)
        object.__setattr__(self, "theta", theta)
        if theta.size < 1:
            raise DomainError("theta must have at least one element")
        if not np.all(np.isfinite(theta)):
            raise DomainError("theta contains non-finite entries")
        if self.noise_factor < 1.0:
            raise DomainError("noise factor must satisfy eta >= 1")
        if self.an_base_power_w <= 0.0:
            raise DomainError("base noise power must be positive")

    @property
    def num_elements(self) -> int:
        return self.theta.size

    @property
    def amplitudes(self) -> np.ndarray:
        return np.abs(self.theta)

    @property
    def an_power_w(self) -> float:
        """Per-element injected noise power eta * sigma_v^2."""
        return self.noise_factor * self.an_base_power_w

    def with_theta(self, theta: np.ndarray) -> "ReflectionConfig":
        return ReflectionConfig(theta, self.noise_factor, self.an_base_power_w)

    def with_noise_factor(self, eta: float) -> "ReflectionConfig":
        return ReflectionConfig(self.theta, eta, self.an_base_power_w)


def reflect(config: ReflectionConfig, incident: np.ndarray) -> np.ndarray:
    """Deterministic part of the reflected field: entry-wise theta_m x_m."""
    incident = np.asarray(incident, dtype=complex).reshape(-1)
    if incident.size != config.num_elements:
        raise DimensionError(
            f"incident field has {incident.size} entries, surface has {config.num_elements}"
        )
    return config.theta * incident


def en_noise_variance(config: ReflectionConfig, g_ej: np.ndarray, bg_noise_w: float) -> float:
    """Total per-sample noise variance seen at one eavesdropper.

    Sum of the injected noise carried over the reflector -> eavesdropper
    channel g_ej and the background noise: eta sigma_v^2 sum_m |theta_m|^2
    |g_ej,m|^2 + sigma^2.  Always >= sigma^2, with equality iff theta = 0.
    """
    g_ej = np.asarray(g_ej, dtype=complex).reshape(-1)
    if g_ej.size != config.num_elements:
        raise DimensionError("channel vector length does not match element count")
    an = config.an_power_w * float(np.sum(np.abs(config.theta) ** 2 * np.abs(g_ej) ** 2))
    return an + float(bg_noise_w)


def uaris_output_power(config: ReflectionConfig, H: np.ndarray, w: np.ndarray) -> float:
    """Total radiated power of the surface, in watts.

    Sum over users of ||Diag(theta) H w_k||^2 plus the injected-noise power
    ||theta||^2 eta sigma_v^2.  This is the left-hand side of the reflector
    power budget.
    """
    H = np.asarray(H, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if w.ndim == 1:
        w = w[None, :]
    if H.shape[0] != config.num_elements or H.shape[1] != w.shape[1]:
        raise DimensionError("H dimensions do not match theta / beamformers")
    reflected = config.theta[None, :] * (w @ H.T)  # (K, M) rows Diag(theta) H w_k
    signal = float(np.sum(np.abs(reflected) ** 2))
    noise = float(np.sum(np.abs(config.theta) ** 2)) * config.an_power_w
    return signal + noise
