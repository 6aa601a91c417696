"""What the eavesdropper coalition records.

Each eavesdropper j samples N frequency bins of a spectrally flat source
waveform arriving over four rays (direct, surface bounce, seabed bounce,
reflector bounce).  The per-bin observation is

    u_j[n] = sum_i f_ij s[n] exp(-j omega_n tau_ij) + v_j[n]

with complex ray coefficients f_ij, bin frequencies omega_n = 2 pi (n-1) /
(N T_s), and v_j circular Gaussian noise whose per-sample variance combines
the reflector's injected noise with the ambient background.  Noise is
independent across eavesdroppers and samples.

The two boundary-bounce coefficients scale the beam sum projected on the
source array's steering vector toward the image of the eavesdropper across
that boundary, with amplitude attenuation(L)^(-1/2) like every other link
(the seabed bounce additionally carries the reflection coefficient kappa_b).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet, ula_phases
from .downlink import BeamformerSet
from .errors import DimensionError, DomainError
from .geometry import AcousticParams, Position3D, ScenarioGeometry, attenuation, four_ray_lengths
from .ris import ReflectionConfig, en_noise_variance

__all__ = [
    "Waveform",
    "FourRayCoeffs",
    "EavesdropperObservation",
    "angular_frequencies",
    "steering_matrix",
    "attenuation_coeffs",
    "coeff_matrix",
    "synthesize_observation",
    "export_observation_csv",
]


@dataclass(frozen=True)
class Waveform:
    """Spectrally flat unit-energy waveform s[n] = exp(j phi[n]) / sqrt(N).

    phases holds all N phase angles with the gauge fixed by phases[0] = 0;
    only the trailing N-1 entries are free parameters.
    """

    phases: np.ndarray

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float).reshape(-1)
        if phases.size < 2:
            raise DomainError("waveform needs at least two samples")
        if phases[0] != 0.0:
            raise DomainError("first phase is gauge-fixed to zero")
        object.__setattr__(self, "phases", phases)

    @property
    def n_samples(self) -> int:
        return self.phases.size

    @property
    def samples(self) -> np.ndarray:
        """(N,) complex samples with |s[n]| = 1/sqrt(N), ||s|| = 1."""
        n = self.n_samples
        return np.exp(1j * self.phases) / np.sqrt(n)

    @classmethod
    def random(cls, n_samples: int, rng: np.random.Generator) -> "Waveform":
        phases = rng.uniform(0.0, 2.0 * np.pi, size=n_samples)
        phases[0] = 0.0
        return cls(phases)


@dataclass(frozen=True)
class FourRayCoeffs:
    """Complex coefficients of the four rays toward one eavesdropper."""

    f: np.ndarray  # (4,)

    def __post_init__(self):
        f = np.asarray(self.f, dtype=complex).reshape(-1)
        if f.size != 4:
            raise DimensionError("exactly four ray coefficients expected")
        object.__setattr__(self, "f", f)


@dataclass(frozen=True)
class EavesdropperObservation:
    """Frequency-domain snapshots of the whole coalition.

    u               (J, N) complex observations
    omega           (N,) bin angular frequencies, omega[0] = 0, increasing
    noise_variances (J,) per-sample noise variance at each eavesdropper
    coeffs          (4, J) ray coefficients that generated the data
    delays          (J, 4) ray delays from the true source position
    """

    u: np.ndarray
    omega: np.ndarray
    noise_variances: np.ndarray
    coeffs: np.ndarray
    delays: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=complex)
        omega = np.asarray(self.omega, dtype=float)
        nv = np.asarray(self.noise_variances, dtype=float)
        if u.ndim != 2 or omega.ndim != 1 or u.shape[1] != omega.size:
            raise DimensionError("u must be (J, N) with omega of length N")
        if nv.shape != (u.shape[0],):
            raise DimensionError("one noise variance per eavesdropper required")
        if omega[0] != 0.0 or np.any(np.diff(omega) <= 0):
            raise DomainError("omega must start at zero and increase")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "noise_variances", nv)
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=complex))
        object.__setattr__(self, "delays", np.asarray(self.delays, dtype=float))

    @property
    def num_eavesdroppers(self) -> int:
        return self.u.shape[0]

    @property
    def n_samples(self) -> int:
        return self.u.shape[1]


def angular_frequencies(n_samples: int, sample_interval_s: float) -> np.ndarray:
    """omega_n = 2 pi (n - 1) / (N T_s) for n = 1..N (returned 0-based)."""
    n = int(n_samples)
    return 2.0 * np.pi * np.arange(n) / (n * sample_interval_s)


def steering_matrix(
    p: Position3D,
    en_index: int,
    geom: ScenarioGeometry,
    params: AcousticParams,
) -> np.ndarray:
    """(N, 4) delay-steering matrix, entry (n, a) = exp(-j omega_n tau_a(p)).

    Depends on the candidate position only through the four ray delays, so
    any two positions with equal delays give the identical matrix.
    """
    en = geom.eavesdroppers[en_index]
    lengths = four_ray_lengths(
        p.as_array(), en.as_array(), geom.uaris.as_array(), geom.seabed_depth_m
    )
    tau = lengths / geom.sound_speed_mps
    omega = angular_frequencies(params.n_samples, params.sample_interval_s)
    return np.exp(-1j * np.outer(omega, tau))


def _image_steering(en: Position3D, source: Position3D, n_antennas: int, mirrored_z: float) -> np.ndarray:
    image = np.array([en.x, en.y, mirrored_z])
    direction = image - source.as_array()
    direction = direction / np.linalg.norm(direction)
    return np.exp(1j * ula_phases(n_antennas, direction))


def attenuation_coeffs(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    geom: ScenarioGeometry,
    params: AcousticParams,
    en_index: int,
) -> FourRayCoeffs:
    """Ray coefficients f_1..f_4 toward eavesdropper en_index.

    f_1 = h_Ej^H sum_i w_i                      (direct)
    f_2 = loss(L_2)^(-1/2) a_surf^H sum_i w_i   (surface bounce)
    f_3 = kappa_b loss(L_3)^(-1/2) a_bed^H sum_i w_i  (seabed bounce)
    f_4 = g_Ej^H Diag(theta) H sum_i w_i        (reflector bounce)

    a_surf / a_bed are the source-array steering vectors toward the
    eavesdropper's image across the surface / seabed.
    """
    t, m, k, j = channels.dims
    if not (0 <= en_index < j):
        raise DomainError(f"eavesdropper index {en_index} out of range")
    if bf.w.shape[1] != t or config.num_elements != m:
        raise DimensionError("beamformers / reflection config do not match channels")
    en = geom.eavesdroppers[en_index]
    w_sum = bf.w.sum(axis=0)

    lengths = four_ray_lengths(
        geom.source.as_array(), en.as_array(), geom.uaris.as_array(), geom.seabed_depth_m
    )
    f1 = np.vdot(channels.h_e_direct[en_index], w_sum)

    a_surf = _image_steering(en, geom.source, t, -en.z)
    amp2 = attenuation(float(lengths[1]), params.freq_khz, params.prop_factor) ** -0.5
    f2 = amp2 * np.vdot(a_surf, w_sum)

    a_bed = _image_steering(en, geom.source, t, 2.0 * geom.seabed_depth_m - en.z)
    amp3 = attenuation(float(lengths[2]), params.freq_khz, params.prop_factor) ** -0.5
    f3 = params.seabed_reflection * amp3 * np.vdot(a_bed, w_sum)

    g_theta = np.conj(config.theta) * channels.g_eu[en_index]  # Theta^H g_Ej
    f4 = np.vdot(g_theta, channels.H @ w_sum) if m else 0.0
    return FourRayCoeffs(np.array([f1, f2, f3, f4]))


def coeff_matrix(
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    geom: ScenarioGeometry,
    params: AcousticParams,
) -> np.ndarray:
    """(4, J) matrix stacking the per-eavesdropper ray coefficients."""
    j = channels.dims[3]
    return np.stack(
        [attenuation_coeffs(channels, config, bf, geom, params, idx).f for idx in range(j)],
        axis=1,
    )


def synthesize_observation(
    p_true: Position3D,
    channels: ChannelSet,
    config: ReflectionConfig,
    bf: BeamformerSet,
    waveform: Waveform,
    geom: ScenarioGeometry,
    params: AcousticParams,
    seed: int,
    noise_draws: np.ndarray | None = None,
) -> EavesdropperObservation:
    """Noisy coalition observation of a source at p_true.

    Noise draws are standard complex normals scaled per eavesdropper by its
    total per-sample standard deviation; pass noise_draws (J, N) of unit
    complex normals to reuse one diffuse realization across operating
    points (paired comparisons), otherwise they are drawn from `seed`.
    """
    if waveform.n_samples != params.n_samples:
        raise DimensionError("waveform length does not match n_samples")
    j = geom.num_eavesdroppers
    n = params.n_samples
    omega = angular_frequencies(n, params.sample_interval_s)
    s = waveform.samples

    coeffs = coeff_matrix(channels, config, bf, geom, params)
    delays = np.stack([
        four_ray_lengths(
            p_true.as_array(), en.as_array(), geom.uaris.as_array(), geom.seabed_depth_m
        ) / geom.sound_speed_mps
        for en in geom.eavesdroppers
    ])
    variances = np.array([
        en_noise_variance(config, channels.g_eu[idx], params.bg_noise_power_w)
        for idx in range(j)
    ])

    if noise_draws is None:
        rng = np.random.default_rng(seed)
        noise_draws = (rng.standard_normal((j, n)) + 1j * rng.standard_normal((j, n))) / np.sqrt(2.0)
    else:
        noise_draws = np.asarray(noise_draws, dtype=complex)
        if noise_draws.shape != (j, n):
            raise DimensionError("noise_draws must be (J, N)")

    u = np.empty((j, n), dtype=complex)
    for idx in range(j):
        phase = np.exp(-1j * np.outer(omega, delays[idx]))  # (N, 4)
        u[idx] = (phase @ coeffs[:, idx]) * s + np.sqrt(variances[idx]) * noise_draws[idx]
    return EavesdropperObservation(
        u=u, omega=omega, noise_variances=variances, coeffs=coeffs, delays=delays
    )


def export_observation_csv(obs: EavesdropperObservation, path) -> None:
    """Flat CSV dump: one row per (eavesdropper, sample) with re/im parts."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["en_index", "sample", "omega_rad_s", "re", "im"])
        for j in range(obs.num_eavesdroppers):
            for n in range(obs.n_samples):
                z = obs.u[j, n]
                writer.writerow([j, n, repr(float(obs.omega[n])), repr(z.real), repr(z.imag)])
