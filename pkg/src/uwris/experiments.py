"""Configuration-driven Monte Carlo experiment families.

A sweep runs `trials` independent scenarios per sweep value and variant:
node placement, channel synthesis, joint optimization, eavesdropper
observation at the optimized operating point, localization attack, and the
position CRLB.  Receivers sit on a sphere of configurable radius around a
center placed d_SR meters from the source; eavesdroppers on a d_ER sphere
around the same center, depths clipped to the water column.

Seeding: every random stream derives from
SeedSequence([root_seed, stage, sweep_index, trial]) spawned into
placement / channel / waveform / noise children (stage 0 for sweeps, 1 for
the ellipsoid study), so a (config, root_seed) pair reproduces results
byte for byte and trials are independent of execution order and worker
count.  The per-trial unit noise draws are shared across variants so
variant comparisons are paired.

Per-trial failures are recorded by cause and excluded from aggregates;
they never abort a sweep.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channels import synthesize_channels
from .configio import ExperimentConfig
from .downlink import BeamformerSet, ObjectiveWeights, all_sinrs, sum_rate
from .eavesdropper import Waveform, synthesize_observation
from .errors import DomainError, UwrisError
from .fisher import FimModel, build_fim, crlb
from .geometry import Position3D, ScenarioGeometry
from .localizer import SearchRegion, localize
from .optimizer import SolverSettings, optimize

__all__ = [
    "ResultRecord",
    "EllipsoidStudyRecord",
    "run_experiment",
    "run_ellipsoid_study",
    "emit_outputs",
    "emit_ellipsoid_outputs",
    "place_nodes",
]

logger = logging.getLogger(__name__)

_STAGE_SWEEP = 0
_STAGE_ELLIPSOID = 1
_MIN_ELLIPSOID_ESTIMATES = 50


@dataclass(frozen=True)
class ResultRecord:
    sweep_variable: str
    sweep_value: float
    variant: str
    mean_sum_rate: float
    sum_rate_stderr: float
    rms_miss_distance: float
    rms_miss_stderr: float
    mean_crlb_position_bound: float
    trials_used: int
    failures: dict


@dataclass(frozen=True)
class EllipsoidStudyRecord:
    variant: str
    p_true: np.ndarray
    center: np.ndarray
    axis_lengths: np.ndarray
    rotation: np.ndarray
    estimates: np.ndarray        # (n, 3)
    inside: np.ndarray           # (n,) bool
    coverage: float
    crlb_position_bound: float
    mean_sum_rate: float


def _rngs(root_seed: int, stage: int, sweep_index: int, trial: int):
    ss = np.random.SeedSequence([root_seed, stage, sweep_index, trial])
    place, chan, wave, noise = ss.spawn(4)
    return (
        np.random.default_rng(place),
        int(chan.generate_state(1)[0]),
        np.random.default_rng(wave),
        np.random.default_rng(noise),
    )


def _sphere_points(center: np.ndarray, radius: float, count: int,
                   rng: np.random.Generator | None, seabed_depth: float) -> list[Position3D]:
    """Points on a sphere around center, depth-clipped to the water column.

    With an rng the directions are uniform random; without one they follow
    the deterministic golden-angle spiral (even spread)."""
    pts = []
    if rng is None:
        golden = np.pi * (3.0 - np.sqrt(5.0))
        for i in range(count):
            z = 1.0 - 2.0 * (i + 0.5) / count
            r = np.sqrt(max(0.0, 1.0 - z * z))
            ang = golden * i
            direction = np.array([r * np.cos(ang), r * np.sin(ang), z])
            pts.append(center + radius * direction)
    else:
        for _ in range(count):
            direction = rng.standard_normal(3)
            direction /= np.linalg.norm(direction)
            pts.append(center + radius * direction)
    out = []
    for p in pts:
        out.append(Position3D(float(p[0]), float(p[1]),
                              float(min(max(p[2], 0.0), seabed_depth))))
    return out


def place_nodes(cfg: ExperimentConfig, d_sr: float, rng: np.random.Generator) -> ScenarioGeometry:
    """One trial's node placement around the receiver-cluster center."""
    src = np.asarray(cfg.pos_source, float)
    direction = np.asarray(cfg.rn_center_direction, float)
    direction = direction / np.linalg.norm(direction)
    center = src + d_sr * direction
    receivers = _sphere_points(
        center, cfg.receiver_sphere_radius_m, cfg.num_receivers,
        rng if cfg.receiver_placement == "random" else None, cfg.seabed_depth_m,
    )
    eavesdroppers = _sphere_points(center, cfg.d_er, cfg.num_eavesdroppers, rng, cfg.seabed_depth_m)
    return ScenarioGeometry(
        source=Position3D(*cfg.pos_source),
        uaris=Position3D(*cfg.pos_uaris),
        receivers=tuple(receivers),
        eavesdroppers=tuple(eavesdroppers),
        seabed_depth_m=cfg.seabed_depth_m,
        sound_speed_mps=cfg.sound_speed_mps,
    )


def _sweep_settings(cfg: ExperimentConfig, value: float):
    d_sr = value if cfg.sweep == "d_sr" else cfg.d_sr
    xi = value if cfg.sweep == "xi" else cfg.xi
    p_total = value if cfg.sweep == "p_total" else cfg.p_total_w
    m = int(value) if cfg.sweep == "m_elements" else cfg.num_elements
    return d_sr, xi, p_total, m


def _variant_weights(variant: str, xi: float, p_total: float, split) -> ObjectiveWeights:
    if variant == "M1":
        # no reflector: the whole budget goes to the source (fair total power)
        return ObjectiveWeights(xi=xi, p_s_max=p_total, p_u_max=split[1] * p_total)
    return ObjectiveWeights(xi=xi, p_s_max=split[0] * p_total, p_u_max=split[1] * p_total)


def _run_trial(cfg: ExperimentConfig, sweep_index: int, value: float, trial: int) -> dict:
    d_sr, xi, p_total, m = _sweep_settings(cfg, value)
    rng_place, chan_seed, rng_wave, rng_noise = _rngs(cfg.root_seed, _STAGE_SWEEP, sweep_index, trial)
    params = cfg.acoustic_params()
    settings = SolverSettings(
        max_iters=cfg.max_iters, rel_tol=cfg.rel_tol, mu_tol=cfg.mu_tol,
        qcqp_tol=cfg.qcqp_tol, seed=chan_seed,
    )
    out: dict[str, dict] = {}
    try:
        geom = place_nodes(cfg, d_sr, rng_place)
        dims = (cfg.num_antennas, m, cfg.num_receivers, cfg.num_eavesdroppers)
        channels = synthesize_channels(geom, params, dims, chan_seed)
        waveform = Waveform.random(params.n_samples, rng_wave)
        unit_noise = (
            rng_noise.standard_normal((cfg.num_eavesdroppers, params.n_samples))
            + 1j * rng_noise.standard_normal((cfg.num_eavesdroppers, params.n_samples))
        ) / np.sqrt(2.0)
        # the coalition's region of interest: a cube around the source area
        region = SearchRegion.cube(
            geom.source, cfg.sbl_cube_m, cfg.seabed_depth_m, cfg.sbl_beta
        )
    except (UwrisError, np.linalg.LinAlgError) as exc:
        cause = type(exc).__name__
        return {v: {"failure": cause} for v in cfg.variants}

    for variant in cfg.variants:
        try:
            weights = _variant_weights(variant, xi, p_total, cfg.power_split)
            state = optimize(
                channels, weights, settings, variant,
                sigma2=params.bg_noise_power_w, an_base_power_w=params.an_base_power_w,
            )
            gammas = all_sinrs(channels, state.reflection, state.bf, params.bg_noise_power_w)
            rate = sum_rate(gammas)
            obs = synthesize_observation(
                geom.source, channels, state.reflection, state.bf, waveform,
                geom, params, seed=0, noise_draws=unit_noise,
            )
            loc = localize(obs, region, geom, params)
            miss = float(np.linalg.norm(loc.p_hat.as_array() - geom.source.as_array()))
            fim = build_fim(FimModel.from_observation(geom.source, obs, waveform, geom, params))
            bound = crlb(fim).position_mse_bound
            out[variant] = {
                "sum_rate": rate,
                "miss": miss,
                "crlb_bound": bound,
                "eta": state.reflection.noise_factor,
                "r3": state.r3_history[-1],
            }
        except (UwrisError, np.linalg.LinAlgError) as exc:
            out[variant] = {"failure": type(exc).__name__}
    return out


def _trial_star(args):
    return _run_trial(*args)


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, float)
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def _rms_stderr(misses: list[float]) -> tuple[float, float]:
    arr = np.asarray(misses, float)
    if arr.size == 0:
        return float("nan"), float("nan")
    sq = arr**2
    rms = math.sqrt(float(sq.mean()))
    if arr.size == 1 or rms == 0.0:
        return rms, 0.0
    se_m2 = float(sq.std(ddof=1) / math.sqrt(arr.size))
    return rms, se_m2 / (2.0 * rms)


def run_experiment(cfg: ExperimentConfig) -> list[ResultRecord]:
    """Run the configured sweep and aggregate per (sweep value, variant)."""
    tasks = [
        (cfg, si, value, trial)
        for si, value in enumerate(cfg.sweep_values)
        for trial in range(cfg.trials)
    ]
    if cfg.workers == 1:
        trial_results = [_run_trial(*task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            trial_results = list(pool.map(_trial_star, tasks))

    records: list[ResultRecord] = []
    for si, value in enumerate(cfg.sweep_values):
        chunk = trial_results[si * cfg.trials:(si + 1) * cfg.trials]
        for variant in cfg.variants:
            rates, misses, bounds = [], [], []
            failures: dict[str, int] = {}
            for res in chunk:
                data = res[variant]
                if "failure" in data:
                    failures[data["failure"]] = failures.get(data["failure"], 0) + 1
                    continue
                rates.append(data["sum_rate"])
                misses.append(data["miss"])
                bounds.append(data["crlb_bound"])
            mean_rate, rate_se = _mean_stderr(rates)
            rms, rms_se = _rms_stderr(misses)
            records.append(ResultRecord(
                sweep_variable=cfg.sweep,
                sweep_value=float(value),
                variant=variant,
                mean_sum_rate=mean_rate,
                sum_rate_stderr=rate_se,
                rms_miss_distance=rms,
                rms_miss_stderr=rms_se,
                mean_crlb_position_bound=float(np.mean(bounds)) if bounds else float("nan"),
                trials_used=len(rates),
                failures=failures,
            ))
            if failures:
                logger.warning("sweep %s=%s variant %s: %s", cfg.sweep, value, variant, failures)
    return records


def run_ellipsoid_study(cfg: ExperimentConfig) -> list[EllipsoidStudyRecord]:
    """Confidence-ellipsoid study at the fixed (non-swept) scenario.

    Per variant: optimize once, evaluate the position CRLB ellipsoid at the
    operating point, then scatter >= 50 localization estimates around it.
    The waveform is fixed across estimates (it is a deterministic unknown
    of the bound); only the additive noise varies.
    """
    n_estimates = max(cfg.trials, _MIN_ELLIPSOID_ESTIMATES)
    rng_place, chan_seed, rng_wave, _ = _rngs(cfg.root_seed, _STAGE_ELLIPSOID, 0, 0)
    params = cfg.acoustic_params()
    geom = place_nodes(cfg, cfg.d_sr, rng_place)
    dims = (cfg.num_antennas, cfg.num_elements, cfg.num_receivers, cfg.num_eavesdroppers)
    channels = synthesize_channels(geom, params, dims, chan_seed)
    waveform = Waveform.random(params.n_samples, rng_wave)
    settings = SolverSettings(
        max_iters=cfg.max_iters, rel_tol=cfg.rel_tol, mu_tol=cfg.mu_tol,
        qcqp_tol=cfg.qcqp_tol, seed=chan_seed,
    )
    region = SearchRegion.cube(geom.source, cfg.sbl_cube_m, cfg.seabed_depth_m, cfg.sbl_beta)

    records = []
    for variant in cfg.variants:
        weights = _variant_weights(variant, cfg.xi, cfg.p_total_w, cfg.power_split)
        state = optimize(
            channels, weights, settings, variant,
            sigma2=params.bg_noise_power_w, an_base_power_w=params.an_base_power_w,
        )
        gammas = all_sinrs(channels, state.reflection, state.bf, params.bg_noise_power_w)
        estimates = []
        for est in range(n_estimates):
            _, _, _, rng_noise = _rngs(cfg.root_seed, _STAGE_ELLIPSOID, 0, est)
            unit_noise = (
                rng_noise.standard_normal((cfg.num_eavesdroppers, params.n_samples))
                + 1j * rng_noise.standard_normal((cfg.num_eavesdroppers, params.n_samples))
            ) / np.sqrt(2.0)
            obs = synthesize_observation(
                geom.source, channels, state.reflection, state.bf, waveform,
                geom, params, seed=0, noise_draws=unit_noise,
            )
            loc = localize(obs, region, geom, params)
            estimates.append(loc.p_hat.as_array())
        fim = build_fim(FimModel.from_observation(geom.source, obs, waveform, geom, params))
        result = crlb(fim)
        est_arr = np.asarray(estimates)
        inside = result.ellipsoid_95.contains(est_arr)
        records.append(EllipsoidStudyRecord(
            variant=variant,
            p_true=geom.source.as_array(),
            center=result.ellipsoid_95.center,
            axis_lengths=result.ellipsoid_95.axis_lengths,
            rotation=result.ellipsoid_95.rotation,
            estimates=est_arr,
            inside=inside,
            coverage=float(np.mean(inside)),
            crlb_position_bound=result.position_mse_bound,
            mean_sum_rate=sum_rate(gammas),
        ))
    return records


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _format_failures(failures: dict) -> str:
    return ";".join(f"{cause}:{count}" for cause, count in sorted(failures.items()))


def _meta_text(cfg: ExperimentConfig | None) -> str:
    from . import __version__  # local import: package __init__ imports this module

    lines = [f"version = {__version__}"]
    if cfg is not None:
        lines.append(f"seed = {cfg.root_seed}")
        for key, value in sorted(cfg.to_mapping().items()):
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def emit_outputs(records: list[ResultRecord], output_dir, cfg: ExperimentConfig | None = None) -> list[Path]:
    """Write results.csv, plot.gp and run.meta (atomic replace per file)."""
    if not records:
        raise DomainError("no records to emit")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    header = [
        "sweep_variable", "sweep_value", "variant", "mean_sum_rate", "sum_rate_stderr",
        "rms_miss_m", "rms_miss_stderr", "mean_crlb_bound_m2", "trials_used", "failures",
    ]
    rows = [",".join(header)]
    for r in records:
        rows.append(",".join([
            r.sweep_variable, repr(r.sweep_value), r.variant,
            repr(r.mean_sum_rate), repr(r.sum_rate_stderr),
            repr(r.rms_miss_distance), repr(r.rms_miss_stderr),
            repr(r.mean_crlb_position_bound), str(r.trials_used),
            _format_failures(r.failures),
        ]))
    results_path = out / "results.csv"
    _atomic_write(results_path, "\n".join(rows) + "\n")

    variants = sorted({r.variant for r in records})
    sweep_var = records[0].sweep_variable
    plot_lines = [
        "# gnuplot script generated alongside results.csv (run: gnuplot plot.gp)",
        "set datafile separator ','",
        "set terminal pngcairo size 900,600",
        "set key outside",
        f"set xlabel '{sweep_var}'",
        "set output 'sum_rate.png'",
        "set ylabel 'sum rate (bit/s/Hz)'",
        "plot \\",
    ]
    plot_lines += [
        f"  'results.csv' using 2:(strcol(3) eq '{v}' ? column(4) : 1/0) "
        f"with linespoints pt 7 title '{v}'" + (", \\" if i + 1 < len(variants) else "")
        for i, v in enumerate(variants)
    ]
    plot_lines += [
        "set output 'miss_distance.png'",
        "set ylabel 'RMS miss distance (m)'",
        "plot \\",
    ]
    plot_lines += [
        f"  'results.csv' using 2:(strcol(3) eq '{v}' ? column(6) : 1/0) "
        f"with linespoints pt 7 title '{v}'" + (", \\" if i + 1 < len(variants) else "")
        for i, v in enumerate(variants)
    ]
    plot_path = out / "plot.gp"
    _atomic_write(plot_path, "\n".join(plot_lines) + "\n")

    meta_path = out / "run.meta"
    _atomic_write(meta_path, _meta_text(cfg))
    return [results_path, plot_path, meta_path]


def emit_ellipsoid_outputs(records: list[EllipsoidStudyRecord], output_dir,
                           cfg: ExperimentConfig | None = None) -> list[Path]:
    """Write ellipsoids.csv, estimates.csv and run.meta for the study."""
    if not records:
        raise DomainError("no records to emit")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = ["variant,coverage,crlb_bound_m2,mean_sum_rate,center_x,center_y,center_z,"
            "axis_1,axis_2,axis_3," + ",".join(f"rot_{i}{j}" for i in range(3) for j in range(3))]
    for r in records:
        rows.append(",".join(
            [r.variant, repr(r.coverage), repr(r.crlb_position_bound), repr(r.mean_sum_rate)]
            + [repr(float(v)) for v in r.center]
            + [repr(float(v)) for v in r.axis_lengths]
            + [repr(float(v)) for v in r.rotation.reshape(-1)]
        ))
    ell_path = out / "ellipsoids.csv"
    _atomic_write(ell_path, "\n".join(rows) + "\n")

    rows = ["variant,estimate,x,y,z,inside"]
    for r in records:
        for i, est in enumerate(r.estimates):
            rows.append(",".join(
                [r.variant, str(i)] + [repr(float(v)) for v in est] + [str(int(r.inside[i]))]
            ))
    est_path = out / "estimates.csv"
    _atomic_write(est_path, "\n".join(rows) + "\n")

    meta_path = out / "run.meta"
    _atomic_write(meta_path, _meta_text(cfg))
    return [ell_path, est_path, meta_path]
