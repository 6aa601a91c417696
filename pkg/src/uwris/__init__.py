"""Reflector-assisted underwater acoustic downlink simulator and optimizer.

Submodules:
    geometry      scenario frame, attenuation law, four-ray paths
    channels      seeded synthesis of all complex channels
    ris           active reflecting surface model and power accounting
    downlink      SINR, sum rate and the weighted merit functions
    eavesdropper  coalition observation synthesis
    localizer     semi-blind localization attack (grid + trust region)
    fisher        Fisher information / CRLB / confidence ellipsoids
    optimizer     alternating fractional-programming optimization
    experiments   Monte Carlo experiment families and CSV outputs
    configio      plain-text configuration files
    cli           command-line front end
"""

__version__ = "0.1.0"

from .channels import ChannelSet, synthesize_channels
from .configio import ExperimentConfig, load_config, parse_kv_file, scenario_from_mapping
from .downlink import (
    BeamformerSet,
    ObjectiveWeights,
    all_sinrs,
    effective_channel,
    objective_r1,
    objective_r2,
    objective_r3,
    objective_r4,
    sinr,
    sum_rate,
)
from .eavesdropper import (
    EavesdropperObservation,
    FourRayCoeffs,
    Waveform,
    attenuation_coeffs,
    steering_matrix,
    synthesize_observation,
)
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    DimensionError,
    DomainError,
    InfeasibleError,
    MonotonicityError,
    SearchFailureError,
    UwrisError,
)
from .experiments import (
    EllipsoidStudyRecord,
    ResultRecord,
    emit_ellipsoid_outputs,
    emit_outputs,
    run_ellipsoid_study,
    run_experiment,
)
from .fisher import (
    CrlbResult,
    Ellipsoid95,
    FimMatrix,
    FimModel,
    ParameterVector,
    build_fim,
    crlb,
)
from .geometry import (
    AcousticParams,
    FourRayGeometry,
    Position3D,
    ScenarioGeometry,
    attenuation,
    four_ray_geometry,
    thorp_absorption_db_per_km,
)
from .localizer import (
    LocalizationResult,
    SearchRegion,
    grid_search,
    localize,
    refine,
    rms_miss_distance,
    score,
)
from .optimizer import (
    OptimizerState,
    SolverSettings,
    optimize,
    update_chi,
    update_eta,
    update_theta,
    update_w,
    update_zeta,
)
from .ris import ReflectionConfig, en_noise_variance, reflect, uaris_output_power
