"""Virtual experiment bench: source + link + compensator + motors on one clock.

This is the piece the source-lab daemon drives, and what the statistical
harnesses (two-day stability, launch-scale uncertainty, angular-difference
sweep) run directly.  Time is virtual: counting windows and waveplate moves
advance the bench clock and the fiber drift deterministically, so a fixed
seed reproduces every count bit-for-bit.

The link budget adds a station insertion loss (free-space launch, analyzer
optics, and re-coupling at the remote end) on top of the bare fiber loss;
the default total of 16.5 dB puts a standard 16 x 10 s run's uncertainty at
sigma_S ~ 0.06, the scale the deployed system reports.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .channel import (
    CountRecord,
    FiberChannel,
    RateModel,
    SourceConfig,
    delivered_state,
)
from .chsh import (
    PORT_COMBOS,
    ChshResult,
    ChshSettings,
    MeasurementMatrix,
    chsh_from_matrix,
    mirrored_setting,
    settings_from_user,
)
from .compensation import (
    CompensationReport,
    ControllerSetting,
    compensator_unitary,
    optimize_compensation,
)
from .polarization import AnalyzerSetting, projection_probability

DEFAULT_STATION_LOSS_DB = 4.5
DEFAULT_INTEGRATION_S = 10.0
DEFAULT_MOTOR_SPEED_DEG_S = 25.0
DEFAULT_SETTLE_S = 0.3


def waveplate_motion(
    from_deg: float,
    to_deg: float,
    speed_deg_s: float = DEFAULT_MOTOR_SPEED_DEG_S,
    settle_s: float = DEFAULT_SETTLE_S,
) -> float:
    """Seconds for a rotation mount to move and settle, shortest path on 360."""
    if speed_deg_s <= 0:
        raise ValueError("speed must be positive")
    dist = abs(from_deg - to_deg) % 360.0
    dist = min(dist, 360.0 - dist)
    return dist / speed_deg_s + settle_s


class ExperimentEngine:
    """Single-owner simulation core behind the counting electronics."""

    def __init__(
        self,
        src: SourceConfig | None = None,
        channel: FiberChannel | None = None,
        station_loss_db: float = DEFAULT_STATION_LOSS_DB,
        seed: int = 0,
        drift_enabled: bool = True,
    ):
        self.src = src if src is not None else SourceConfig()
        self.channel = channel if channel is not None else FiberChannel(seed=seed)
        self.station_loss_db = float(station_loss_db)
        self.seed = int(seed)
        self.drift_enabled = bool(drift_enabled)
        self.compensator = np.eye(2, dtype=complex)
        self.clock_s = 0.0

    # -- state ------------------------------------------------------------

    def delivered(self) -> np.ndarray:
        return delivered_state(self.src, self.channel, self.compensator)

    def link_rates(self) -> RateModel:
        return RateModel.over_link(
            self.src, self.channel.loss_db + self.station_loss_db
        )

    def advance(self, dt_s: float) -> None:
        self.clock_s += dt_s
        if self.drift_enabled and dt_s > 0:
            self.channel.advance(dt_s)

    def compensate(self, tol: float = 1e-6, seed: int | None = None) -> CompensationReport:
        """Align the paddle stack against the current fiber snapshot."""
        report = optimize_compensation(
            self.channel, self.src, seed=self.seed if seed is None else seed, tol=tol
        )
        self.compensator = compensator_unitary(report.setting)
        return report

    def set_compensator(self, setting: ControllerSetting) -> None:
        self.compensator = compensator_unitary(setting)

    # -- counting ---------------------------------------------------------

    def count_window(
        self,
        signal_angle_deg: float,
        idler_angle_deg: float,
        duration_s: float,
        rng: np.random.Generator,
    ) -> CountRecord:
        """One counting window at commanded analyzer angles (transmitted ports).

        The deployed signal path mirrors its commanded angle; the record
        keeps the commanded value, which is what the motor reported.
        """
        state = self.delivered()
        rates = self.link_rates()
        p = projection_probability(
            state,
            mirrored_setting(signal_angle_deg),
            AnalyzerSetting(idler_angle_deg),
        )
        mean = rates.coincidence_cps * p * duration_s
        rec = CountRecord(
            signal_setting=AnalyzerSetting(signal_angle_deg),
            idler_setting=AnalyzerSetting(idler_angle_deg),
            duration_s=duration_s,
            coincidences=int(rng.poisson(mean)),
            singles_signal=int(rng.poisson(rates.singles_signal_cps * duration_s)),
            singles_idler=int(rng.poisson(rates.singles_idler_cps * duration_s)),
            wall_time=self.clock_s,
        )
        self.advance(duration_s)
        return rec

    def exact_pair_probabilities(
        self, signal_angle_deg: float, idler_angle_deg: float
    ) -> tuple[float, float, float, float]:
        state = self.delivered()
        return tuple(
            projection_probability(
                state,
                mirrored_setting(signal_angle_deg, sp),
                AnalyzerSetting(idler_angle_deg, ip),
            )
            for sp, ip in PORT_COMBOS
        )  # type: ignore[return-value]

    # -- sessions ---------------------------------------------------------

    def session_rng(self, settings: ChshSettings, integration_s: float) -> np.random.Generator:
        """Counting stream determined by seed and settings alone.

        Two runs with identical settings draw identical counts; that makes
        full end-to-end sessions reproducible by construction.
        """
        key = [
            self.seed,
            int(round(settings.a * 1e6)) & 0xFFFFFFFF,
            int(round(settings.a_prime * 1e6)) & 0xFFFFFFFF,
            int(round(integration_s * 1e6)) & 0xFFFFFFFF,
        ]
        return np.random.default_rng(key)

    def measurement_steps(
        self, settings: ChshSettings
    ) -> list[tuple[int, float, float]]:
        """The 16 (slot, signal angle, idler angle) steps in canonical order.

        Port selection is an analyzer offset of +90 degrees (the analysis
        waveplate turns +45), since each arm has a single output detector.
        """
        steps = []
        slot = 0
        for sig, idl in settings.angle_pairs():
            for sp, ip in PORT_COMBOS:
                s = sig + (90.0 if sp == "reflected" else 0.0)
                i = idl + (90.0 if ip == "reflected" else 0.0)
                steps.append((slot, s, i))
                slot += 1
        return steps

    def run_session(
        self,
        a_deg: float,
        a_prime_deg: float,
        integration_s: float = DEFAULT_INTEGRATION_S,
        include_motion: bool = False,
    ) -> tuple[ChshResult, MeasurementMatrix]:
        """Full 16-window run on the bench, without any networking.

        Record timestamps are relative to the session start, so two runs at
        identical settings are identical bit for bit.
        """
        settings = settings_from_user(a_deg, a_prime_deg)
        rng = self.session_rng(settings, integration_s)
        t0 = self.clock_s
        records = []
        motor_sig, motor_idl = 0.0, 0.0
        for _, sig, idl in self.measurement_steps(settings):
            if include_motion:
                delay = max(
                    waveplate_motion(motor_sig, sig / 2.0),
                    waveplate_motion(motor_idl, idl / 2.0),
                )
                motor_sig, motor_idl = sig / 2.0, idl / 2.0
                self.advance(delay)
            records.append(self.count_window(sig, idl, integration_s, rng))
        records = tuple(
            dataclasses.replace(r, wall_time=r.wall_time - t0) for r in records
        )
        matrix = MeasurementMatrix(settings=settings, records=records)
        result = chsh_from_matrix(matrix, live=True, wall_time=self.clock_s - t0)
        return result, matrix


# --- statistical harnesses -------------------------------------------------


def sweep_angular_difference(
    visibility: float,
    delta_grid: np.ndarray,
    integration_s: float = DEFAULT_INTEGRATION_S,
    anchor_a_deg: float = 0.0,
    seed: int = 0,
) -> list[tuple[float, float, float]]:
    """CHSH versus angle difference through the full count simulation.

    Each grid point runs a complete 16-window session on a drift-free bench
    at the given source visibility; returns (delta_deg, s_value, sigma_s).
    """
    grid = np.asarray(delta_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("delta grid must be non-empty")
    rows = []
    for k, delta in enumerate(grid):
        engine = ExperimentEngine(
            src=SourceConfig(visibility=visibility),
            channel=FiberChannel(seed=seed),
            seed=seed + 7919 * (k + 1),
            drift_enabled=False,
        )
        result, _ = engine.run_session(
            anchor_a_deg, anchor_a_deg + delta, integration_s
        )
        rows.append((float(delta), result.s_value, result.sigma_s))
    return rows


@dataclass(frozen=True)
class StabilityRun:
    times_s: tuple[float, ...]
    s_values: tuple[float, ...]
    sigmas: tuple[float, ...]

    def mean_s(self) -> float:
        return float(np.mean(self.s_values))

    def std_s(self) -> float:
        return float(np.std(self.s_values))


def simulate_stability(
    hours: float = 48.0,
    sessions: int = 96,
    visibility: float = 0.884,
    drift_bound_deg_per_hr: float = 2.0,
    drift_enabled: bool = True,
    a_deg: float = 0.0,
    a_prime_deg: float = 45.0,
    integration_s: float = DEFAULT_INTEGRATION_S,
    seed: int = 0,
) -> StabilityRun:
    """Periodic unattended runs after a single alignment at t = 0.

    The compensator is set once against the fresh channel and never
    adjusted again; drift (if enabled) accumulates between sessions.
    """
    engine = ExperimentEngine(
        src=SourceConfig(visibility=visibility),
        channel=FiberChannel(
            seed=seed, drift_rate_bound_deg_per_hr=drift_bound_deg_per_hr
        ),
        seed=seed,
        drift_enabled=drift_enabled,
    )
    engine.compensate()
    interval_s = hours * 3600.0 / sessions
    times, values, sigmas = [], [], []
    for k in range(sessions):
        engine.advance(interval_s)
        # per-session stream: sessions must differ even at fixed settings
        settings = settings_from_user(a_deg, a_prime_deg)
        rng = np.random.default_rng([seed, 1000 + k])
        records = []
        for _, sig, idl in engine.measurement_steps(settings):
            records.append(engine.count_window(sig, idl, integration_s, rng))
        matrix = MeasurementMatrix(settings=settings, records=tuple(records))
        result = chsh_from_matrix(matrix, wall_time=engine.clock_s)
        times.append(engine.clock_s)
        values.append(result.s_value)
        sigmas.append(result.sigma_s)
    return StabilityRun(tuple(times), tuple(values), tuple(sigmas))


def launch_sigma_samples(
    n_runs: int = 100,
    visibility: float = 0.884,
    a_deg: float = 0.0,
    a_prime_deg: float = 45.0,
    integration_s: float = DEFAULT_INTEGRATION_S,
    seed: int = 0,
) -> list[tuple[float, float]]:
    """(|S|, sigma_S) from independent single sessions at default rates."""
    out = []
    for k in range(n_runs):
        engine = ExperimentEngine(
            src=SourceConfig(visibility=visibility),
            seed=seed + k,
            drift_enabled=False,
        )
        result, _ = engine.run_session(a_deg, a_prime_deg, integration_s)
        out.append((result.s_value, result.sigma_s))
    return out
