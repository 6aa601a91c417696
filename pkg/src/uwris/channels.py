"""Stochastic synthesis of the complex channels between all node pairs.

Every link is modeled as a far-field line-of-sight path: entry magnitudes
equal attenuation(d, f)^(-1/2) so received power scales with the inverse of
the propagation loss, and inter-element phases follow the plane-wave
geometry of a half-wavelength uniform linear array.  Each link additionally
carries one global phase drawn uniformly from [0, 2pi), which is the only
random ingredient; a fixed seed therefore reproduces the channel set
exactly.

Array axes: both the source array (T elements) and the reflector array
(M elements) are laid out along the x axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, DimensionError, DomainError
from .geometry import AcousticParams, ScenarioGeometry, attenuation

__all__ = ["ChannelSet", "ula_phases", "synthesize_channels"]

_ARRAY_AXIS = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class ChannelSet:
    """All complex channel matrices of one realization.

    h_direct    (K, T) source -> receiver k rows
    H           (M, T) source -> reflector array
    g_ru        (K, M) reflector -> receiver k rows
    h_e_direct  (J, T) source -> eavesdropper j rows
    g_eu        (J, M) reflector -> eavesdropper j rows
    """

    h_direct: np.ndarray
    H: np.ndarray
    g_ru: np.ndarray
    h_e_direct: np.ndarray
    g_eu: np.ndarray

    def __post_init__(self):
        k, t = self.h_direct.shape
        m, t2 = self.H.shape
        if t2 != t or self.g_ru.shape != (k, m):
            raise DimensionError("inconsistent channel dimensions")
        j = self.h_e_direct.shape[0]
        if self.h_e_direct.shape != (j, t) or self.g_eu.shape != (j, m):
            raise DimensionError("inconsistent eavesdropper channel dimensions")
        for name in ("h_direct", "H", "g_ru", "h_e_direct", "g_eu"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} contains non-finite entries")
            if np.any(np.abs(arr) == 0.0):
                raise DomainError(f"{name} contains zero-magnitude entries")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(T, M, K, J)"""
        return (
            self.h_direct.shape[1],
            self.H.shape[0],
            self.h_direct.shape[0],
            self.h_e_direct.shape[0],
        )


def ula_phases(n_elements: int, unit_dir: np.ndarray) -> np.ndarray:
    """Per-element plane-wave phases of a half-wavelength ULA on the x axis.

    unit_dir is the unit vector from the array toward the far-field node.
    """
    cos_angle = float(np.dot(np.asarray(unit_dir, dtype=float), _ARRAY_AXIS))
    return np.pi * np.arange(n_elements) * cos_angle


def _unit(vec: np.ndarray, link: str) -> tuple[np.ndarray, float]:
    d = float(np.linalg.norm(vec))
    if d == 0.0:
        raise DegenerateGeometryError(f"coincident endpoints on link {link}")
    return vec / d, d


def _los_vector(n: int, from_xyz, to_xyz, params: AcousticParams, phase: float, link: str) -> np.ndarray:
    u, d = _unit(np.asarray(to_xyz) - np.asarray(from_xyz), link)
    amp = attenuation(d, params.freq_khz, params.prop_factor) ** -0.5
    return amp * np.exp(1j * (ula_phases(n, u) + phase))


def synthesize_channels(
    geom: ScenarioGeometry,
    params: AcousticParams,
    dims: tuple[int, int, int, int],
    seed: int,
) -> ChannelSet:
    """Draw one channel realization for the scenario.

    dims is (T, M, K, J) and must agree with the receiver/eavesdropper
    counts in geom.  The global link phases are drawn from a generator
    seeded with `seed` in a fixed order (receivers, reflector, reflector ->
    receivers, eavesdroppers, reflector -> eavesdroppers), so equal seeds
    give entry-wise identical channel sets.
    """
    t, m, k, j = (int(x) for x in dims)
    if min(t, m, k, j) < 1:
        raise DomainError("all dimensions must be positive")
    if k != geom.num_receivers or j != geom.num_eavesdroppers:
        raise DimensionError(
            f"dims K={k}, J={j} do not match geometry ({geom.num_receivers}, {geom.num_eavesdroppers})"
        )
    rng = np.random.default_rng(seed)
    src = geom.source.as_array()
    ua = geom.uaris.as_array()

    def phase() -> float:
        return float(rng.uniform(0.0, 2.0 * np.pi))

    h_direct = np.stack([
        _los_vector(t, src, rx.as_array(), params, phase(), f"source->receiver {i}")
        for i, rx in enumerate(geom.receivers)
    ])

    u_dep, d_su = _unit(ua - src, "source->uaris")
    u_arr = -u_dep
    amp = attenuation(d_su, params.freq_khz, params.prop_factor) ** -0.5
    H = amp * np.exp(1j * (
        ula_phases(m, u_arr)[:, None] + ula_phases(t, u_dep)[None, :] + phase()
    ))

    g_ru = np.stack([
        _los_vector(m, ua, rx.as_array(), params, phase(), f"uaris->receiver {i}")
        for i, rx in enumerate(geom.receivers)
    ])
    h_e_direct = np.stack([
        _los_vector(t, src, en.as_array(), params, phase(), f"source->eavesdropper {i}")
        for i, en in enumerate(geom.eavesdroppers)
    ])
    g_eu = np.stack([
        _los_vector(m, ua, en.as_array(), params, phase(), f"uaris->eavesdropper {i}")
        for i, en in enumerate(geom.eavesdroppers)
    ])
    return ChannelSet(h_direct=h_direct, H=H, g_ru=g_ru, h_e_direct=h_e_direct, g_eu=g_eu)
