"""Fisher information and Cramér-Rao machinery for the coalition's estimate.

The unknown deterministic parameters of the observation model are stacked
as

    theta = [x, y, z, phi[1..N-1], Re{vec(F)}, Im{vec(F)}, var_1..var_J]

(positions in meters, N-1 free waveform phases, 4J complex ray
coefficients split into real/imaginary parts, and one total per-sample
noise variance per eavesdropper -- the injected-noise/background mix enters
only through these totals).  The mean of the complex Gaussian observation
is mu(theta) = stack_j Diag(T_j f_j) s and its covariance is diagonal with
the per-eavesdropper variances, so the information matrix splits into a
signal block 2 Re{ (d mu)^H Sigma^-1 (d mu) } and a decoupled diagonal
noise block (N / var_j^2 from the Gaussian covariance term; a literal
"unit" compatibility mode uses N instead -- the signal-parameter bounds are
unaffected either way because the blocks decouple).

The position derivatives use the chain rule through the four ray delays;
every analytic derivative here is validated against central finite
differences in the test suite.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .eavesdropper import EavesdropperObservation, Waveform, angular_frequencies
from .errors import DegenerateGeometryError, DimensionError, DomainError
from .geometry import AcousticParams, Position3D, ScenarioGeometry, four_ray_lengths

__all__ = [
    "ParameterVector",
    "FimModel",
    "FimMatrix",
    "Ellipsoid95",
    "CrlbResult",
    "mean_vector",
    "mean_derivative_position",
    "mean_derivative_phase",
    "mean_derivative_channel",
    "jacobian",
    "build_fim",
    "crlb",
    "write_crlb_csv",
    "write_ellipsoid_record",
]

logger = logging.getLogger(__name__)

_CHI2_95_3DOF = float(chi2.ppf(0.95, 3))
_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class ParameterVector:
    """Flat view of all unknown parameters of the observation model."""

    position: np.ndarray     # (3,)
    phases: np.ndarray       # (N-1,) free waveform phases
    f_real: np.ndarray       # (4J,) Re{vec(F)}, column-major
    f_imag: np.ndarray       # (4J,)
    noise_vars: np.ndarray   # (J,) per-eavesdropper total variances

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, float).reshape(3))
        object.__setattr__(self, "phases", np.asarray(self.phases, float).reshape(-1))
        object.__setattr__(self, "f_real", np.asarray(self.f_real, float).reshape(-1))
        object.__setattr__(self, "f_imag", np.asarray(self.f_imag, float).reshape(-1))
        object.__setattr__(self, "noise_vars", np.asarray(self.noise_vars, float).reshape(-1))
        j = self.noise_vars.size
        if self.f_real.size != 4 * j or self.f_imag.size != 4 * j:
            raise DimensionError("coefficient blocks must hold 4 entries per eavesdropper")
        if np.any(self.noise_vars <= 0):
            raise DomainError("noise variances must be strictly positive")

    @property
    def length(self) -> int:
        return 3 + self.phases.size + self.f_real.size + self.f_imag.size + self.noise_vars.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.position, self.phases, self.f_real, self.f_imag, self.noise_vars,
        ])

    @classmethod
    def from_vector(cls, vec: np.ndarray, n_samples: int, n_eavesdroppers: int) -> "ParameterVector":
        vec = np.asarray(vec, dtype=float).reshape(-1)
        n, j = int(n_samples), int(n_eavesdroppers)
        expected = 3 + (n - 1) + 8 * j + j
        if vec.size != expected:
            raise DimensionError(f"expected {expected} parameters, got {vec.size}")
        ofs = 3
        phases = vec[ofs:ofs + n - 1]; ofs += n - 1
        f_real = vec[ofs:ofs + 4 * j]; ofs += 4 * j
        f_imag = vec[ofs:ofs + 4 * j]; ofs += 4 * j
        return cls(vec[:3], phases, f_real, f_imag, vec[ofs:])


@dataclass(frozen=True)
class FimModel:
    """Everything needed to evaluate the observation mean and its derivatives.

    coeffs is the (4, J) ray-coefficient matrix, noise_vars the per-EN
    total per-sample variances.  Geometry constants (eavesdropper and
    reflector positions, depth, sound speed) are knowns, not parameters.
    """

    source: np.ndarray           # (3,)
    en_positions: np.ndarray     # (J, 3)
    uaris: np.ndarray            # (3,)
    seabed_depth_m: float
    sound_speed_mps: float
    sample_interval_s: float
    waveform: Waveform
    coeffs: np.ndarray           # (4, J) complex
    noise_vars: np.ndarray       # (J,)

    def __post_init__(self):
        object.__setattr__(self, "source", np.asarray(self.source, float).reshape(3))
        object.__setattr__(self, "en_positions", np.asarray(self.en_positions, float).reshape(-1, 3))
        object.__setattr__(self, "uaris", np.asarray(self.uaris, float).reshape(3))
        coeffs = np.asarray(self.coeffs, dtype=complex)
        nv = np.asarray(self.noise_vars, dtype=float).reshape(-1)
        j = self.en_positions.shape[0]
        if coeffs.shape != (4, j) or nv.size != j:
            raise DimensionError("coeffs must be (4, J) with J noise variances")
        if np.any(nv <= 0):
            raise DomainError("noise variances must be strictly positive")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "noise_vars", nv)

    @property
    def n_samples(self) -> int:
        return self.waveform.n_samples

    @property
    def num_eavesdroppers(self) -> int:
        return self.en_positions.shape[0]

    @property
    def n_parameters(self) -> int:
        return 3 + (self.n_samples - 1) + 8 * self.num_eavesdroppers + self.num_eavesdroppers

    @property
    def omega(self) -> np.ndarray:
        return angular_frequencies(self.n_samples, self.sample_interval_s)

    @classmethod
    def from_observation(
        cls,
        p_true: Position3D,
        obs: EavesdropperObservation,
        waveform: Waveform,
        geom: ScenarioGeometry,
        params: AcousticParams,
    ) -> "FimModel":
        """Bundle the generating parameters of a synthesized observation."""
        return cls(
            source=p_true.as_array(),
            en_positions=np.stack([en.as_array() for en in geom.eavesdroppers]),
            uaris=geom.uaris.as_array(),
            seabed_depth_m=geom.seabed_depth_m,
            sound_speed_mps=geom.sound_speed_mps,
            sample_interval_s=params.sample_interval_s,
            waveform=waveform,
            coeffs=obs.coeffs,
            noise_vars=obs.noise_variances,
        )

    def parameters(self) -> ParameterVector:
        return ParameterVector(
            position=self.source,
            phases=self.waveform.phases[1:],
            f_real=self.coeffs.real.flatten(order="F"),
            f_imag=self.coeffs.imag.flatten(order="F"),
            noise_vars=self.noise_vars,
        )

    def with_parameters(self, theta: ParameterVector | np.ndarray) -> "FimModel":
        if not isinstance(theta, ParameterVector):
            theta = ParameterVector.from_vector(theta, self.n_samples, self.num_eavesdroppers)
        j = self.num_eavesdroppers
        coeffs = (theta.f_real + 1j * theta.f_imag).reshape(4, j, order="F")
        phases = np.concatenate([[0.0], theta.phases])
        return FimModel(
            source=theta.position,
            en_positions=self.en_positions,
            uaris=self.uaris,
            seabed_depth_m=self.seabed_depth_m,
            sound_speed_mps=self.sound_speed_mps,
            sample_interval_s=self.sample_interval_s,
            waveform=Waveform(phases),
            coeffs=coeffs,
            noise_vars=theta.noise_vars,
        )

    def layout(self) -> dict[str, slice]:
        n, j = self.n_samples, self.num_eavesdroppers
        ofs = 0
        blocks = {}
        for name, size in (
            ("position", 3),
            ("phases", n - 1),
            ("coeff_real", 4 * j),
            ("coeff_imag", 4 * j),
            ("noise", j),
        ):
            blocks[name] = slice(ofs, ofs + size)
            ofs += size
        return blocks


def _delays(model: FimModel) -> np.ndarray:
    """(J, 4) ray delays from the model's source position."""
    lengths = np.stack([
        four_ray_lengths(model.source, en, model.uaris, model.seabed_depth_m)
        for en in model.en_positions
    ])
    return lengths / model.sound_speed_mps


def _steering(model: FimModel, j: int) -> np.ndarray:
    tau = _delays(model)[j]
    return np.exp(-1j * np.outer(model.omega, tau))


def mean_vector(model: FimModel) -> np.ndarray:
    """(N*J,) stacked noiseless observation mean, one length-N block per EN."""
    s = model.waveform.samples
    tau = _delays(model)
    blocks = []
    for j in range(model.num_eavesdroppers):
        t_mat = np.exp(-1j * np.outer(model.omega, tau[j]))
        blocks.append((t_mat @ model.coeffs[:, j]) * s)
    return np.concatenate(blocks)


def _delay_gradients(model: FimModel) -> np.ndarray:
    """(J, 4, 3) gradients d tau_aj / d(x, y, z) of the four ray delays."""
    p = model.source
    ua = model.uaris
    h = model.seabed_depth_m
    to_uaris = p - ua
    d_uaris = np.linalg.norm(to_uaris)
    if d_uaris == 0.0:
        raise DegenerateGeometryError("source coincides with the reflector")
    grads = np.empty((model.num_eavesdroppers, 4, 3))
    for j, en in enumerate(model.en_positions):
        diff = p - en
        lengths = four_ray_lengths(p, en, model.uaris, h)
        if np.any(lengths == 0.0):
            raise DegenerateGeometryError(
                f"zero-length ray toward eavesdropper {j}", en_index=j
            )
        grads[j, 0] = diff / lengths[0]
        grads[j, 1] = np.array([diff[0], diff[1], p[2] + en[2]]) / lengths[1]
        grads[j, 2] = np.array([diff[0], diff[1], -(2.0 * h - p[2] - en[2])]) / lengths[2]
        grads[j, 3] = to_uaris / d_uaris
    return grads / model.sound_speed_mps


def mean_derivative_position(model: FimModel, axis: int | str) -> np.ndarray:
    """d mu / d axis, axis in {0,1,2} or {'x','y','z'}.

    Per-EN block Diag((dT_j/d axis) f_j) s with dT_j entries
    -j omega_n (d tau_aj / d axis) exp(-j omega_n tau_aj); the first sample
    of each block vanishes because omega_1 = 0.
    """
    ax = _AXES.get(axis, axis)
    if ax not in (0, 1, 2):
        raise DomainError(f"unknown axis {axis!r}")
    s = model.waveform.samples
    tau = _delays(model)
    dtau = _delay_gradients(model)
    omega = model.omega
    blocks = []
    for j in range(model.num_eavesdroppers):
        t_mat = np.exp(-1j * np.outer(omega, tau[j]))
        dt = -1j * omega[:, None] * dtau[j, :, ax][None, :] * t_mat
        blocks.append((dt @ model.coeffs[:, j]) * s)
    return np.concatenate(blocks)


def mean_derivative_phase(model: FimModel, n: int) -> np.ndarray:
    """d mu / d phi[n] for a 0-based sample index n >= 1.

    Equals j s[n] (T_j f_j)[n] at sample n of every EN block and zero
    elsewhere; index 0 is the gauge-fixed phase and is rejected.
    """
    if not (1 <= n < model.n_samples):
        raise DomainError("phase index must be in 1..N-1 (sample 0 is gauge-fixed)")
    s = model.waveform.samples
    tau = _delays(model)
    out = np.zeros(model.n_samples * model.num_eavesdroppers, dtype=complex)
    for j in range(model.num_eavesdroppers):
        t_row = np.exp(-1j * model.omega[n] * tau[j])
        out[j * model.n_samples + n] = 1j * s[n] * (t_row @ model.coeffs[:, j])
    return out


def mean_derivative_channel(model: FimModel, ray: int, en: int, part: str) -> np.ndarray:
    """d mu / d Re{f_ray,en} or d mu / d Im{...} (0-based ray and EN indices).

    Support is confined to the EN's block: Diag(T_j e_ray) s, times j for
    the imaginary part.
    """
    if not (0 <= ray < 4):
        raise DomainError("ray index must be in 0..3")
    if not (0 <= en < model.num_eavesdroppers):
        raise DomainError("eavesdropper index out of range")
    if part not in ("real", "imag"):
        raise DomainError("part must be 'real' or 'imag'")
    s = model.waveform.samples
    t_mat = _steering(model, en)
    block = t_mat[:, ray] * s
    if part == "imag":
        block = 1j * block
    out = np.zeros(model.n_samples * model.num_eavesdroppers, dtype=complex)
    out[en * model.n_samples:(en + 1) * model.n_samples] = block
    return out


def jacobian(model: FimModel) -> np.ndarray:
    """(N*J, n_signal) matrix of mean derivatives for all signal parameters.

    Columns follow the parameter layout: position, phases, Re{vec(F)},
    Im{vec(F)} (coefficients column-major, ray index fastest).
    """
    n, j = model.n_samples, model.num_eavesdroppers
    cols = []
    for ax in range(3):
        cols.append(mean_derivative_position(model, ax))
    for idx in range(1, n):
        cols.append(mean_derivative_phase(model, idx))
    for part in ("real", "imag"):
        for en in range(j):
            for ray in range(4):
                cols.append(mean_derivative_channel(model, ray, en, part))
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class FimMatrix:
    """Fisher information with its block layout and evaluation point."""

    matrix: np.ndarray
    layout: dict[str, slice]
    position: np.ndarray
    noise_block: str

    @property
    def n_parameters(self) -> int:
        return self.matrix.shape[0]


def build_fim(model: FimModel, noise_block: str = "general") -> FimMatrix:
    """Assemble the full Fisher information matrix.

    noise_block 'general' uses the Gaussian-covariance term N / var_j^2;
    'unit' reproduces the simplified literal value N.  Signal/noise cross
    blocks are exactly zero either way.
    """
    if noise_block not in ("general", "unit"):
        raise DomainError("noise_block must be 'general' or 'unit'")
    n, j = model.n_samples, model.num_eavesdroppers
    jac = jacobian(model)
    weights = np.repeat(1.0 / model.noise_vars, n)
    signal = 2.0 * np.real(jac.conj().T @ (weights[:, None] * jac))
    total = model.n_parameters
    full = np.zeros((total, total))
    n_sig = signal.shape[0]
    full[:n_sig, :n_sig] = signal
    if noise_block == "general":
        noise_diag = n / model.noise_vars ** 2
    else:
        noise_diag = np.full(j, float(n))
    full[n_sig:, n_sig:] = np.diag(noise_diag)
    return FimMatrix(full, model.layout(), model.source.copy(), noise_block)


@dataclass(frozen=True)
class Ellipsoid95:
    """95 % confidence ellipsoid of the position estimate.

    Region {p : (p - center)^T shape^-1 (p - center) <= 1} with shape =
    q95 * CRLB_pos, q95 the 0.95 quantile of chi-square with 3 degrees of
    freedom.  axis_lengths are sqrt(q95 * eig_i) along the rows of
    rotation.
    """

    center: np.ndarray
    shape: np.ndarray
    axis_lengths: np.ndarray
    rotation: np.ndarray

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3) - self.center[None, :]
        m = np.linalg.solve(self.shape, pts.T).T
        return np.einsum("ij,ij->i", pts, m) <= 1.0

    @property
    def volume(self) -> float:
        return float(4.0 / 3.0 * np.pi * np.prod(self.axis_lengths))


@dataclass(frozen=True)
class CrlbResult:
    full_crlb: np.ndarray
    position_mse_bound: float
    ellipsoid_95: Ellipsoid95
    ill_conditioned: bool


def crlb(fim: FimMatrix, cond_limit: float = 1e12) -> CrlbResult:
    """Invert the information matrix and extract the position bound.

    The signal and noise blocks decouple exactly, so they are inverted
    separately: the diagonal noise block trivially, the signal block
    densely with a pseudo-inverse fallback (flagged, never silent) when
    its condition number exceeds cond_limit.  The position MSE bound is
    the trace of the leading 3x3 block of the inverse; the 95 % ellipsoid
    scales that block by the 3-dof chi-square quantile.
    """
    mat = fim.matrix
    n_noise = fim.layout["noise"].stop - fim.layout["noise"].start
    n_sig = mat.shape[0] - n_noise
    sig = mat[:n_sig, :n_sig]
    cond = np.linalg.cond(sig)
    ill = not np.isfinite(cond) or cond > cond_limit
    if ill:
        logger.warning(
            "signal-block condition number %.3g exceeds %.1g; using pseudo-inverse",
            cond, cond_limit,
        )
        sig_inv = np.linalg.pinv(sig, rcond=1.0 / cond_limit)
    else:
        sig_inv = np.linalg.inv(sig)
    noise_diag = np.diag(mat)[n_sig:]
    inv = np.zeros_like(mat)
    inv[:n_sig, :n_sig] = sig_inv
    inv[n_sig:, n_sig:] = np.diag(1.0 / noise_diag)
    pos = fim.layout["position"]
    block = inv[pos, pos]
    bound = float(np.trace(block))
    evals, evecs = np.linalg.eigh(block)
    evals = np.maximum(evals, 0.0)
    ellipsoid = Ellipsoid95(
        center=fim.position.copy(),
        shape=_CHI2_95_3DOF * block,
        axis_lengths=np.sqrt(_CHI2_95_3DOF * evals),
        rotation=evecs.T,
    )
    return CrlbResult(inv, bound, ellipsoid, ill)


def write_crlb_csv(result: CrlbResult, layout: dict[str, slice], path) -> None:
    """Diagonal of the CRLB with block labels, one parameter per row."""
    diag = np.diag(result.full_crlb)
    labels = np.empty(diag.size, dtype=object)
    for name, sl in layout.items():
        labels[sl] = name
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "block", "crlb_diag"])
        for i, (lab, val) in enumerate(zip(labels, diag)):
            writer.writerow([i, lab, repr(float(val))])


def write_ellipsoid_record(ellipsoid: Ellipsoid95, path) -> None:
    """Plot-ready ellipsoid record: center, axis lengths, rotation rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["field", "x", "y", "z"])
        writer.writerow(["center"] + [repr(float(v)) for v in ellipsoid.center])
        writer.writerow(["axis_lengths"] + [repr(float(v)) for v in ellipsoid.axis_lengths])
        for i in range(3):
            writer.writerow([f"axis_{i}"] + [repr(float(v)) for v in ellipsoid.rotation[i]])
