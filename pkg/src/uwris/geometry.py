"""Scenario geometry and shallow-water acoustic attenuation.

Coordinate convention: right-handed x/y/z frame with z in meters measured
downward from the sea surface, so a node at 30 m depth has z = 30 and the
seabed sits at z = h.

Propagation loss follows the classic power law

    loss(d, f) = d^epsilon * absorb(f)^d

with the absorption coefficient from Thorp's empirical formula (dB/km for
f in kHz) converted to a per-meter linear power ratio.  The four-ray path
set (direct, surface bounce, seabed bounce, reflector bounce) uses image
sources for the two boundary reflections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "Position3D",
    "ScenarioGeometry",
    "AcousticParams",
    "FourRayGeometry",
    "thorp_absorption_db_per_km",
    "attenuation",
    "four_ray_lengths",
    "four_ray_geometry",
]


@dataclass(frozen=True)
class Position3D:
    """A point in the water column (meters, z positive downward)."""

    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "Position3D":
        a = np.asarray(arr, dtype=float).reshape(3)
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def distance_to(self, other: "Position3D") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))


@dataclass(frozen=True)
class ScenarioGeometry:
    """Positions of the source, reflector array, receivers and eavesdroppers.

    seabed_depth_m is the water depth h; sound_speed_mps the (constant)
    sound speed c.  All node depths must lie in [0, h] and the source may
    not coincide with any eavesdropper.
    """

    source: Position3D
    uaris: Position3D
    receivers: tuple[Position3D, ...]
    eavesdroppers: tuple[Position3D, ...]
    seabed_depth_m: float
    sound_speed_mps: float

    def __post_init__(self):
        object.__setattr__(self, "receivers", tuple(self.receivers))
        object.__setattr__(self, "eavesdroppers", tuple(self.eavesdroppers))
        if self.seabed_depth_m <= 0:
            raise DomainError("seabed depth must be positive")
        if self.sound_speed_mps <= 0:
            raise DomainError("sound speed must be positive")
        if len(self.receivers) < 1:
            raise DomainError("need at least one receiver")
        if len(self.eavesdroppers) < 1:
            raise DomainError("need at least one eavesdropper")
        h = self.seabed_depth_m
        for name, nodes in (
            ("source", (self.source,)),
            ("uaris", (self.uaris,)),
            ("receiver", self.receivers),
            ("eavesdropper", self.eavesdroppers),
        ):
            for p in nodes:
                if not (0.0 <= p.z <= h):
                    raise DomainError(f"{name} depth {p.z} outside water column [0, {h}]")
        for j, en in enumerate(self.eavesdroppers):
            if self.source.distance_to(en) == 0.0:
                raise DomainError(f"source coincides with eavesdropper {j}")

    @property
    def num_receivers(self) -> int:
        return len(self.receivers)

    @property
    def num_eavesdroppers(self) -> int:
        return len(self.eavesdroppers)


@dataclass(frozen=True)
class AcousticParams:
    """Acoustic and sampling constants of the scenario.

    freq_khz            carrier frequency f (kHz)
    prop_factor         spreading exponent epsilon (>= 1)
    seabed_reflection   seabed amplitude reflection coefficient in [0, 1]
    bg_noise_power_w    background noise power sigma^2 (watts)
    an_base_power_w     base power of the injected noise source (watts)
    sample_interval_s   eavesdropper sampling interval T_s (seconds)
    n_samples           number of frequency-domain samples N
    """

    freq_khz: float
    prop_factor: float = 1.5
    seabed_reflection: float = 0.85
    bg_noise_power_w: float = 1e-9
    an_base_power_w: float = 1e-9
    sample_interval_s: float = 1e-3
    n_samples: int = 64

    def __post_init__(self):
        for name in ("freq_khz", "prop_factor", "bg_noise_power_w",
                     "an_base_power_w", "sample_interval_s"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if not (0.0 <= self.seabed_reflection <= 1.0):
            raise DomainError("seabed_reflection must lie in [0, 1]")
        if int(self.n_samples) < 1:
            raise DomainError("n_samples must be a positive integer")
        object.__setattr__(self, "n_samples", int(self.n_samples))


@dataclass(frozen=True)
class FourRayGeometry:
    """Path lengths and delays of the four propagation rays to one node."""

    lengths_m: np.ndarray   # (4,) direct, surface, seabed, reflector
    delays_s: np.ndarray    # (4,) lengths / c
    horizontal_dist_m: float


def thorp_absorption_db_per_km(freq_khz: float) -> float:
    """Thorp absorption coefficient in dB/km for a frequency in kHz.

    >>> round(thorp_absorption_db_per_km(5.0), 5)
    0.38231
    """
    if freq_khz <= 0:
        raise DomainError("frequency must be positive")
    f2 = freq_khz * freq_khz
    return 0.11 * f2 / (1.0 + f2) + 44.0 * f2 / (4100.0 + f2) + 2.75e-4 * f2 + 0.003


def attenuation(dist_m: float, freq_khz: float, prop_factor: float = 1.5) -> float:
    """Linear power-loss factor over a path of dist_m meters.

    Evaluates d^epsilon * absorb(f)^d with the per-meter linear absorption
    ratio absorb(f) = 10^(alpha_dB / 10000), alpha_dB from Thorp's formula.
    Computed in log10 space so long ranges do not overflow.
    """
    if dist_m <= 0:
        raise DomainError("distance must be positive")
    alpha_db_per_km = thorp_absorption_db_per_km(freq_khz)
    log10_loss = prop_factor * math.log10(dist_m) + dist_m * alpha_db_per_km / 1e4
    return 10.0 ** log10_loss


def four_ray_lengths(points, en_xyz, uaris_xyz, seabed_depth_m: float) -> np.ndarray:
    """Path lengths of the four rays from candidate source points to one node.

    points may be a single (3,) coordinate or a stack (..., 3); the result
    has shape (..., 4) ordered direct / surface bounce / seabed bounce /
    reflector bounce.  The surface and seabed bounces use the node's image
    across the respective boundary.
    """
    p = np.asarray(points, dtype=float)
    en = np.asarray(en_xyz, dtype=float).reshape(3)
    ua = np.asarray(uaris_xyz, dtype=float).reshape(3)
    h = float(seabed_depth_m)

    diff = p - en
    l1 = np.linalg.norm(diff, axis=-1)
    lat2 = diff[..., 0] ** 2 + diff[..., 1] ** 2
    l2 = np.sqrt(lat2 + (p[..., 2] + en[2]) ** 2)
    l3 = np.sqrt(lat2 + (2.0 * h - p[..., 2] - en[2]) ** 2)
    l4 = np.linalg.norm(p - ua, axis=-1) + np.linalg.norm(ua - en)
    return np.stack([l1, l2, l3, l4], axis=-1)


def four_ray_geometry(
    p: Position3D,
    en: Position3D,
    uaris: Position3D,
    seabed_depth_m: float,
    sound_speed_mps: float,
) -> FourRayGeometry:
    """Four-ray lengths and delays from a candidate position p to node en."""
    h = float(seabed_depth_m)
    if not (0.0 <= p.z <= h and 0.0 <= en.z <= h):
        raise DomainError("positions must lie inside the water column")
    if sound_speed_mps <= 0:
        raise DomainError("sound speed must be positive")
    lengths = four_ray_lengths(p.as_array(), en.as_array(), uaris.as_array(), h)
    horiz = math.hypot(p.x - en.x, p.y - en.y)
    return FourRayGeometry(
        lengths_m=lengths,
        delays_s=lengths / float(sound_speed_mps),
        horizontal_dist_m=horiz,
    )
