"""Software twin of a two-node entangled-photon network with a public kiosk."""

from .analyzer import (
    AnalyzerFrame,
    AnalyzerStation,
    CalibrationState,
    normalize,
    reconstruct_angle,
    round_trip_error,
    simulate_frame,
    update_calibration,
)
from .channel import (
    CountRecord,
    FiberChannel,
    RateModel,
    SourceConfig,
    advance_drift,
    channel_unitary,
    delivered_state,
    drift_trace,
    simulate_counts,
    transmission,
)
from .chsh import (
    ChshResult,
    ChshSettings,
    MeasurementMatrix,
    TomographyResult,
    chsh_from_matrix,
    chsh_ideal,
    correlation_from_counts,
    exact_measurement_matrix,
    fidelity_series,
    settings_from_user,
    tomography_linear_inversion,
)
from .compensation import (
    CompensationReport,
    ControllerSetting,
    compensator_unitary,
    objective,
    optimize_compensation,
    visibility,
)
from .engine import (
    ExperimentEngine,
    launch_sigma_samples,
    simulate_stability,
    sweep_angular_difference,
    waveplate_motion,
)
from .fallback import default_sweep_table, fallback_result
from .polarization import (
    AnalyzerSetting,
    apply_local,
    canonical_angle,
    correlation_E,
    fidelity,
    make_psi_plus,
    projection_probability,
    waveplate_unitary,
    werner_mix,
)

__version__ = "0.1.0"
