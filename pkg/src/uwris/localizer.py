"""Semi-blind source localization run by the eavesdropper coalition.

The coalition knows only its own positions, the reflector position, the
water depth and the sound speed -- never the channels, the waveform or the
reflector configuration.  For a candidate position p it whitens each
delay-steering matrix T_j(p) through the Cholesky factor of A_j = T_j^T
T_j^*, stacks the whitened blocks scaled by the observations into

    Z(p) = [U_1 T_1^* Omega_1^{-1}, ..., U_J T_J^* Omega_J^{-1}],

and scores p by the largest eigenvalue of the Gram matrix D(p) = Z^H Z.
A grid scan over the region of interest seeds a derivative-free
trust-region ascent.

Grid scoring is vectorized over lattice chunks; the result is independent
of chunking and evaluation order (pure scores, first-index tie break).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .eavesdropper import EavesdropperObservation
from .errors import DegenerateGeometryError, DomainError, SearchFailureError
from .geometry import AcousticParams, Position3D, ScenarioGeometry, four_ray_lengths

__all__ = [
    "SearchRegion",
    "LocalizationResult",
    "power_iteration",
    "score",
    "score_many",
    "grid_search",
    "refine",
    "localize",
    "rms_miss_distance",
    "write_trial_log",
]

logger = logging.getLogger(__name__)

_CHUNK = 512  # lattice points scored per vectorized batch
# Cholesky-pivot ratio below which A_j counts as singular; matched to the
# 1e-14 ridge (an exactly singular ridged matrix lands near sqrt(1e-14/2))
_RCOND_DEGENERATE = 1e-6


@dataclass(frozen=True)
class SearchRegion:
    """Axis-aligned box with a beta-per-axis lattice."""

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    z_range: tuple[float, float]
    resolution: int

    def __post_init__(self):
        for name in ("x_range", "y_range", "z_range"):
            lo, hi = getattr(self, name)
            if not (lo <= hi):
                raise DomainError(f"{name} is empty")
        if self.z_range[0] < 0.0:
            raise DomainError("z_range extends above the sea surface")
        if int(self.resolution) < 2:
            raise DomainError("grid resolution must be at least 2")
        object.__setattr__(self, "resolution", int(self.resolution))

    @classmethod
    def cube(
        cls, center: Position3D, side_m: float, seabed_depth_m: float, resolution: int
    ) -> "SearchRegion":
        """Cube of the given side around center, depth-clipped to the water column."""
        half = side_m / 2.0
        return cls(
            x_range=(center.x - half, center.x + half),
            y_range=(center.y - half, center.y + half),
            z_range=(max(0.0, center.z - half), min(seabed_depth_m, center.z + half)),
            resolution=resolution,
        )

    def lattice(self) -> np.ndarray:
        """(beta^3, 3) lattice points; linear index = ((ix * beta) + iy) * beta + iz."""
        b = self.resolution
        xs = np.linspace(*self.x_range, b)
        ys = np.linspace(*self.y_range, b)
        zs = np.linspace(*self.z_range, b)
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)


@dataclass(frozen=True)
class LocalizationResult:
    p_hat: Position3D
    grid_best: Position3D
    score: float
    iterations: int
    aborted: bool = False


def power_iteration(d: np.ndarray, tol: float = 1e-10, max_iters: int = 500) -> float:
    """Largest eigenvalue of a Hermitian PSD matrix by power iteration.

    Deterministic ramp start vector; converges on the Rayleigh quotient.
    Falls back to a dense eigensolve if the iteration cap is hit (clustered
    top eigenvalues).
    """
    d = np.asarray(d)
    n = d.shape[0]
    v = np.linspace(1.0, 2.0, n).astype(complex)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = d @ v
        lam_new = float(np.real(np.vdot(v, w)))
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam = lam_new
    logger.debug("power iteration hit the %d-step cap; dense fallback", max_iters)
    return float(np.linalg.eigvalsh(d)[-1])


def _gram_chunk(
    points: np.ndarray,
    obs: EavesdropperObservation,
    geom: ScenarioGeometry,
    raise_on_degenerate: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrices D(p) for a chunk of candidate points.

    Returns (d, degenerate) with d of shape (P, 4J, 4J); degenerate points
    get an identity placeholder and a True mask entry (or raise when
    raise_on_degenerate, identifying the eavesdropper).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n_pts = pts.shape[0]
    j_total = obs.num_eavesdroppers
    n = obs.n_samples
    omega = obs.omega
    ua = geom.uaris.as_array()
    c = geom.sound_speed_mps

    z = np.empty((n_pts, n, 4 * j_total), dtype=complex)
    degenerate = np.zeros(n_pts, dtype=bool)
    eye = np.eye(4, dtype=complex)
    for j in range(j_total):
        en = geom.eavesdroppers[j].as_array()
        tau = four_ray_lengths(pts, en, ua, geom.seabed_depth_m) / c  # (P, 4)
        t_mat = np.exp(-1j * omega[None, :, None] * tau[:, None, :])  # (P, N, 4)
        a_mat = np.transpose(t_mat, (0, 2, 1)) @ np.conj(t_mat)  # T^T T^*
        # tiny ridge keeps the batched factorization alive at exactly
        # coincident delays; affected points are detected and masked below
        a_reg = a_mat + (1e-14 * n) * eye
        try:
            chol = np.linalg.cholesky(a_reg)
            bad = np.zeros(n_pts, dtype=bool)
        except np.linalg.LinAlgError:
            chol = np.empty_like(a_reg)
            bad = np.zeros(n_pts, dtype=bool)
            for p in range(n_pts):
                try:
                    chol[p] = np.linalg.cholesky(a_reg[p])
                except np.linalg.LinAlgError:
                    chol[p] = eye
                    bad[p] = True
        diag = np.abs(np.diagonal(chol, axis1=-2, axis2=-1))
        bad |= diag.min(axis=-1) <= _RCOND_DEGENERATE * diag.max(axis=-1)
        if bad.any() and raise_on_degenerate:
            raise DegenerateGeometryError(
                f"steering matrix numerically singular for eavesdropper {j}", en_index=j
            )
        degenerate |= bad
        chol[bad] = eye
        # whitened block T^* Omega^{-1} with Omega = L^H, so Omega^{-1} = (L^{-1})^H
        linv = np.linalg.inv(chol)
        w_blk = np.conj(t_mat) @ np.conj(np.transpose(linv, (0, 2, 1)))
        z[:, :, 4 * j:4 * (j + 1)] = obs.u[j][None, :, None] * w_blk
    d = np.conj(np.transpose(z, (0, 2, 1))) @ z
    return d, degenerate


def score(
    p: Position3D,
    obs: EavesdropperObservation,
    geom: ScenarioGeometry,
    params: AcousticParams | None = None,
) -> float:
    """Localization score lambda_max(D(p)) at a single candidate position."""
    d, _ = _gram_chunk(p.as_array()[None, :], obs, geom, raise_on_degenerate=True)
    return power_iteration(d[0])


def score_many(
    points,
    obs: EavesdropperObservation,
    geom: ScenarioGeometry,
) -> np.ndarray:
    """Scores for a stack of candidate points; degenerate points get -inf."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], _CHUNK):
        chunk = pts[start:start + _CHUNK]
        d, degenerate = _gram_chunk(chunk, obs, geom, raise_on_degenerate=False)
        vals = np.linalg.eigvalsh(d)[:, -1]
        vals[degenerate] = -np.inf
        out[start:start + chunk.shape[0]] = vals
    return out


def grid_search(
    obs: EavesdropperObservation,
    region: SearchRegion,
    geom: ScenarioGeometry,
    params: AcousticParams | None = None,
) -> Position3D:
    """Best lattice point of the region; ties break to the lowest linear index."""
    if region.z_range[1] > geom.seabed_depth_m:
        raise DomainError("search region extends below the seabed")
    pts = region.lattice()
    scores = score_many(pts, obs, geom)
    n_degenerate = int(np.sum(~np.isfinite(scores)))
    if n_degenerate:
        logger.info("grid search skipped %d degenerate lattice points", n_degenerate)
    if n_degenerate == pts.shape[0]:
        raise SearchFailureError("every lattice point was degenerate")
    best = int(np.argmax(scores))
    return Position3D.from_array(pts[best])


def refine(
    p0: Position3D,
    obs: EavesdropperObservation,
    geom: ScenarioGeometry,
    params: AcousticParams | None = None,
    *,
    fd_step_m: float = 1e-2,
    initial_radius_m: float = 1.0,
    min_step_m: float = 1e-3,
    max_iters: int = 200,
) -> LocalizationResult:
    """Trust-region ascent on the score from p0.

    Central finite differences estimate the gradient; steepest-ascent
    proposals of trust-radius length are accepted only if the score
    improves, with the radius doubled on good agreement (ratio > 0.75) and
    halved on poor agreement (ratio < 0.25) or rejection.  Stops once the
    radius falls below min_step_m or after max_iters proposals.  Depth is
    kept inside the water column.
    """
    if not np.all(np.isfinite(p0.as_array())):
        raise DomainError("refinement start must be finite")
    h = geom.seabed_depth_m

    def clip(arr: np.ndarray) -> np.ndarray:
        out = arr.copy()
        out[2] = min(max(out[2], 0.0), h)
        return out

    p = clip(p0.as_array())
    current = score_many(p[None, :], obs, geom)[0]
    if not np.isfinite(current):
        return LocalizationResult(Position3D.from_array(p), p0, float(current), 0, aborted=True)

    radius = initial_radius_m
    iterations = 0
    aborted = False
    offsets = np.concatenate([np.eye(3) * fd_step_m, -np.eye(3) * fd_step_m])
    while iterations < max_iters and radius >= min_step_m:
        iterations += 1
        fd_points = np.array([clip(p + off) for off in offsets])
        fd_scores = score_many(fd_points, obs, geom)
        if not np.all(np.isfinite(fd_scores)):
            aborted = True
            break
        grad = (fd_scores[:3] - fd_scores[3:]) / (2.0 * fd_step_m)
        gnorm = float(np.linalg.norm(grad))
        if gnorm == 0.0:
            break
        trial = clip(p + radius * grad / gnorm)
        trial_score = score_many(trial[None, :], obs, geom)[0]
        if not np.isfinite(trial_score):
            aborted = True
            break
        predicted = float(np.dot(grad, trial - p))
        actual = trial_score - current
        ratio = actual / predicted if predicted > 0 else -1.0
        # improvements at roundoff scale are plateau noise, not ascent
        if actual > 1e-12 * max(1.0, abs(current)):
            p, current = trial, trial_score
            if ratio > 0.75:
                radius *= 2.0
            elif ratio < 0.25:
                radius *= 0.5
        else:
            radius *= 0.5
    return LocalizationResult(
        p_hat=Position3D.from_array(p),
        grid_best=p0,
        score=float(current),
        iterations=iterations,
        aborted=aborted,
    )


def localize(
    obs: EavesdropperObservation,
    region: SearchRegion,
    geom: ScenarioGeometry,
    params: AcousticParams | None = None,
    **refine_kwargs,
) -> LocalizationResult:
    """Grid scan followed by trust-region refinement."""
    p0 = grid_search(obs, region, geom, params)
    return refine(p0, obs, geom, params, **refine_kwargs)


def rms_miss_distance(trials) -> float:
    """Root-mean-square distance between true and estimated positions.

    trials is a sequence of (p_true, p_hat) pairs (Position3D or length-3
    coordinates).
    """
    pairs = list(trials)
    if not pairs:
        raise DomainError("no trials supplied")
    sq = []
    for p_true, p_hat in pairs:
        a = p_true.as_array() if isinstance(p_true, Position3D) else np.asarray(p_true, float)
        b = p_hat.as_array() if isinstance(p_hat, Position3D) else np.asarray(p_hat, float)
        sq.append(float(np.sum((a - b) ** 2)))
    return math.sqrt(float(np.mean(sq)))


def write_trial_log(records, path) -> None:
    """CSV log of localization trials: true position, estimate, score, iterations."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "x_true", "y_true", "z_true", "x_hat", "y_hat", "z_hat", "score", "iterations",
        ])
        for p_true, result in records:
            a = p_true.as_array() if isinstance(p_true, Position3D) else np.asarray(p_true, float)
            b = result.p_hat.as_array()
            writer.writerow([repr(float(x)) for x in a]
                            + [repr(float(x)) for x in b]
                            + [repr(result.score), result.iterations])
