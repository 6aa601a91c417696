"""Plain-text `key = value` configuration files.

One assignment per line, `#` starts a comment, blank lines are ignored.
Values are scalars, comma-separated triples (positions, splits) or
comma-separated lists (sweep values, variants).  Keys mirror the scenario
parameter names, e.g.

    freq_khz = 5
    seabed_depth_m = 100
    pos_source = 200.7,140.6,50.2
    sweep = d_sr
    sweep_values = 100,200,300,400,500

Unknown keys are rejected so typos fail loudly at validation time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, UwrisError
from .geometry import AcousticParams, Position3D, ScenarioGeometry

__all__ = ["parse_kv_file", "ExperimentConfig", "load_config", "scenario_from_mapping"]

SWEEP_VARIABLES = ("d_sr", "xi", "p_total", "m_elements")


def parse_kv_file(path) -> dict[str, str]:
    """Read a `key = value` file into an ordered string mapping."""
    mapping: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{path}:{lineno}: empty key or value")
        if key in mapping:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        mapping[key] = value
    return mapping


def _triple(value: str, key: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"{key} must be three comma-separated numbers")
    try:
        return tuple(float(p) for p in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _float_list(value: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(p.strip()) for p in value.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment family needs, with desk-scale defaults."""

    # acoustics / scenario constants
    freq_khz: float = 5.0
    prop_factor: float = 1.5
    seabed_reflection: float = 0.85
    bg_noise_power_w: float = 1e-9
    an_base_power_w: float = 1e-9
    sample_interval_s: float = 1e-3
    n_samples: int = 64
    sound_speed_mps: float = 1500.0
    seabed_depth_m: float = 100.0
    pos_source: tuple[float, float, float] = (200.7, 140.6, 50.2)
    pos_uaris: tuple[float, float, float] = (500.0, 210.0, 30.0)

    # dimensions
    num_antennas: int = 4
    num_elements: int = 64
    num_receivers: int = 4
    num_eavesdroppers: int = 4

    # node placement
    d_sr: float = 300.0
    d_er: float = 20.0
    receiver_sphere_radius_m: float = 10.0
    receiver_placement: str = "random"  # or "even"
    rn_center_direction: tuple[float, float, float] = (1.0, 0.0, 0.0)

    # power and objective
    p_total_w: float = 1.0
    power_split: tuple[float, float] = (0.9, 0.1)
    xi: float = 0.02

    # solver
    max_iters: int = 100
    rel_tol: float = 1e-4
    mu_tol: float = 1e-6
    qcqp_tol: float = 1e-6

    # localization attack
    sbl_cube_m: float = 100.0
    sbl_beta: int = 15

    # experiment controls
    sweep: str = "d_sr"
    sweep_values: tuple[float, ...] = ()
    trials: int = 100
    variants: tuple[str, ...] = ("M1", "M2", "M3")
    root_seed: int = 1
    workers: int = 1
    output_dir: str = "results"

    def __post_init__(self):
        if self.sweep not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep must be one of {SWEEP_VARIABLES}")
        if not self.sweep_values:
            defaults = {
                "d_sr": (self.d_sr,),
                "xi": (self.xi,),
                "p_total": (self.p_total_w,),
                "m_elements": (float(self.num_elements),),
            }
            object.__setattr__(self, "sweep_values", defaults[self.sweep])
        if tuple(sorted(self.sweep_values)) != tuple(self.sweep_values):
            raise ConfigError("sweep_values must be sorted ascending")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not self.variants or any(v not in ("M1", "M2", "M3") for v in self.variants):
            raise ConfigError("variants must be a nonempty subset of M1,M2,M3")
        if abs(sum(self.power_split) - 1.0) > 1e-9 or min(self.power_split) <= 0:
            raise ConfigError("power_split fractions must be positive and sum to 1")
        if self.receiver_placement not in ("random", "even"):
            raise ConfigError("receiver_placement must be 'random' or 'even'")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if np.linalg.norm(self.rn_center_direction) == 0:
            raise ConfigError("rn_center_direction must be nonzero")

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            kwargs[key] = _convert(key, value, known[key].type)
        try:
            return cls(**kwargs)
        except (DomainError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def acoustic_params(self, n_samples: int | None = None) -> AcousticParams:
        return AcousticParams(
            freq_khz=self.freq_khz,
            prop_factor=self.prop_factor,
            seabed_reflection=self.seabed_reflection,
            bg_noise_power_w=self.bg_noise_power_w,
            an_base_power_w=self.an_base_power_w,
            sample_interval_s=self.sample_interval_s,
            n_samples=n_samples if n_samples is not None else self.n_samples,
        )

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)

    def to_mapping(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                out[f.name] = ",".join(str(v) for v in value)
            else:
                out[f.name] = str(value)
        return out


def _convert(key: str, value: str, annotation: str):
    if key in ("pos_source", "pos_uaris", "rn_center_direction"):
        return _triple(value, key)
    if key == "power_split":
        parts = _float_list(value, key)
        if len(parts) != 2:
            raise ConfigError("power_split needs exactly two fractions")
        return parts
    if key == "sweep_values":
        return _float_list(value, key)
    if key == "variants":
        return tuple(p.strip() for p in value.split(",") if p.strip())
    if key in ("sweep", "receiver_placement", "output_dir"):
        return value
    if key in ("n_samples", "num_antennas", "num_elements", "num_receivers",
               "num_eavesdroppers", "max_iters", "sbl_beta", "trials",
               "root_seed", "workers"):
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigError(f"{key} must be an integer") from exc
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number") from exc


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_mapping(parse_kv_file(path))


def scenario_from_mapping(mapping: dict[str, str]) -> tuple[ScenarioGeometry, AcousticParams]:
    """Build an explicit scenario from a mapping with literal node positions.

    Expects pos_source, pos_uaris, pos_receivers and pos_eavesdroppers
    (semicolon-separated x,y,z triples) plus the acoustic keys.
    """
    required = ("pos_source", "pos_uaris", "pos_receivers", "pos_eavesdroppers")
    for key in required:
        if key not in mapping:
            raise ConfigError(f"missing key {key!r}")

    def positions(value: str, key: str) -> tuple[Position3D, ...]:
        out = []
        for chunk in value.split(";"):
            chunk = chunk.strip()
            if chunk:
                out.append(Position3D(*_triple(chunk, key)))
        if not out:
            raise ConfigError(f"{key} lists no positions")
        return tuple(out)

    def get_float(key: str, default: float) -> float:
        return float(mapping[key]) if key in mapping else default

    try:
        geom = ScenarioGeometry(
            source=Position3D(*_triple(mapping["pos_source"], "pos_source")),
            uaris=Position3D(*_triple(mapping["pos_uaris"], "pos_uaris")),
            receivers=positions(mapping["pos_receivers"], "pos_receivers"),
            eavesdroppers=positions(mapping["pos_eavesdroppers"], "pos_eavesdroppers"),
            seabed_depth_m=get_float("seabed_depth_m", 100.0),
            sound_speed_mps=get_float("sound_speed_mps", 1500.0),
        )
        params = AcousticParams(
            freq_khz=get_float("freq_khz", 5.0),
            prop_factor=get_float("prop_factor", 1.5),
            seabed_reflection=get_float("seabed_reflection", 0.85),
            bg_noise_power_w=get_float("bg_noise_power_w", 1e-9),
            an_base_power_w=get_float("an_base_power_w", 1e-9),
            sample_interval_s=get_float("sample_interval_s", 1e-3),
            n_samples=int(mapping.get("n_samples", 64)),
        )
    except UwrisError as exc:
        raise ConfigError(str(exc)) from exc
    return geom, params
