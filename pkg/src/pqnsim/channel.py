"""Source, deployed-fiber link, and Poisson coincidence counting.

The fiber applies a slowly drifting, wavelength-dependent unitary to the
signal photon.  Drift is a seeded, rate-limited random walk: every substep
of the azimuth (and of a small ellipticity phase) is clipped to the
configured bound times the elapsed time, so the angular change over any
window can never exceed bound x window.  A weak pull toward the starting
point keeps multi-day excursions small, matching the observed long-term
stability of a buried loop after an initial manual alignment.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .polarization import (
    AnalyzerSetting,
    apply_local,
    make_psi_plus,
    projection_probability,
    rotation_unitary,
    werner_mix,
)

_SUBSTEP_S = 360.0  # drift integration substep; 0.1 h keeps walks smooth


@dataclass
class SourceConfig:
    """Entangled-pair source operating point.

    ``pair_rate_cps`` is the detected coincidence rate with both arms kept
    local.  Whether the headline rate of the real bench was measured locally
    or through the deployed loop is ambiguous; it is treated as local here,
    and network runs scale it by the link transmission.
    """

    pair_rate_cps: float = 3000.0
    heralding_efficiency: float = 0.05
    visibility: float = 0.884
    target_state: np.ndarray = field(default_factory=make_psi_plus)

    def __post_init__(self) -> None:
        if self.pair_rate_cps <= 0:
            raise ValueError("pair_rate_cps must be positive")
        if not 0.0 < self.heralding_efficiency <= 1.0:
            raise ValueError("heralding_efficiency must be in (0, 1]")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError("visibility must be in [0, 1]")


def transmission(loss_db: float) -> float:
    """Power transmission of a link with the given decibel loss."""
    if loss_db < 0:
        raise ValueError("loss_db must be non-negative")
    return float(10.0 ** (-loss_db / 10.0))


@dataclass
class _ChannelDrift:
    azimuth_deg: float = 0.0
    ellipticity_deg: float = 0.0


class FiberChannel:
    """Mutable state of the deployed loop: loss plus per-wavelength drift.

    Single-owner: one clock advances it; readers take immutable snapshots.
    Deterministic given ``seed`` and the sequence of ``advance`` calls.
    """

    def __init__(
        self,
        loss_db: float = 12.0,
        wavelengths_nm: tuple[int, ...] = (1555, 1560, 1565),
        drift_rate_bound_deg_per_hr: float = 2.0,
        seed: int = 0,
        ellipticity_rate_bound_deg_per_hr: float = 0.5,
        reversion_hours: float = 24.0,
        walk_scale_deg_per_sqrt_hr: float = 2.0,
    ):
        if loss_db < 0:
            raise ValueError("loss_db must be non-negative")
        if not wavelengths_nm:
            raise ValueError("need at least one wavelength channel")
        self.loss_db = float(loss_db)
        self.wavelengths_nm = tuple(int(w) for w in wavelengths_nm)
        self.drift_rate_bound_deg_per_hr = float(drift_rate_bound_deg_per_hr)
        self.ellipticity_rate_bound_deg_per_hr = float(ellipticity_rate_bound_deg_per_hr)
        self.reversion_hours = float(reversion_hours)
        self.walk_scale_deg_per_sqrt_hr = float(walk_scale_deg_per_sqrt_hr)
        self.seed = int(seed)
        self.elapsed_s = 0.0
        self._drift: dict[int, _ChannelDrift] = {}
        self._rng: dict[int, np.random.Generator] = {}
        for wl in self.wavelengths_nm:
            self._drift[wl] = _ChannelDrift()
            self._rng[wl] = np.random.default_rng([self.seed, wl])

    @property
    def center_wavelength_nm(self) -> int:
        wls = sorted(self.wavelengths_nm)
        return wls[len(wls) // 2]

    def drift_state(self, wavelength_nm: int) -> _ChannelDrift:
        try:
            return replace(self._drift[int(wavelength_nm)])
        except KeyError:
            raise KeyError(f"no wavelength channel at {wavelength_nm} nm") from None

    def advance(self, dt_s: float) -> "FiberChannel":
        """Evolve every wavelength channel forward by ``dt_s`` seconds."""
        if dt_s < 0:
            raise ValueError("dt_s must be non-negative")
        if dt_s == 0.0:
            return self
        remaining = float(dt_s)
        while remaining > 0.0:
            step = min(remaining, _SUBSTEP_S)
            self._substep(step)
            remaining -= step
        self.elapsed_s += float(dt_s)
        return self

    def _substep(self, dt_s: float) -> None:
        dt_h = dt_s / 3600.0
        sqrt_dt = np.sqrt(dt_h)
        for wl in self.wavelengths_nm:
            rng = self._rng[wl]
            st = self._drift[wl]
            az_lim = self.drift_rate_bound_deg_per_hr * dt_h
            raw = (
                -st.azimuth_deg * dt_h / self.reversion_hours
                + self.walk_scale_deg_per_sqrt_hr * sqrt_dt * rng.standard_normal()
            )
            st.azimuth_deg += float(np.clip(raw, -az_lim, az_lim))
            ell_lim = self.ellipticity_rate_bound_deg_per_hr * dt_h
            raw_e = (
                -st.ellipticity_deg * dt_h / self.reversion_hours
                + 0.25 * self.walk_scale_deg_per_sqrt_hr * sqrt_dt * rng.standard_normal()
            )
            st.ellipticity_deg += float(np.clip(raw_e, -ell_lim, ell_lim))

    def unitary(self, wavelength_nm: int) -> np.ndarray:
        """Current polarization transformation of one wavelength channel."""
        st = self.drift_state(wavelength_nm)
        ell = np.deg2rad(st.ellipticity_deg)
        ret = np.diag([np.exp(-0.5j * ell), np.exp(0.5j * ell)]).astype(complex)
        return rotation_unitary(st.azimuth_deg) @ ret

    def snapshot_unitary(self) -> np.ndarray:
        """Immutable copy of the center-channel unitary, for readers."""
        return self.unitary(self.center_wavelength_nm).copy()


def advance_drift(ch: FiberChannel, dt_s: float) -> FiberChannel:
    """Advance the channel clock; returns the same (mutated) channel."""
    return ch.advance(dt_s)


def channel_unitary(ch: FiberChannel, wavelength_nm: int) -> np.ndarray:
    return ch.unitary(wavelength_nm)


def azimuth_of_unitary(u: np.ndarray) -> float:
    """Polarization azimuth (degrees) of the image of |H> under ``u``."""
    a, b = np.asarray(u, dtype=complex) @ np.array([1.0, 0.0], dtype=complex)
    return float(np.rad2deg(0.5 * np.arctan2(2.0 * (a.conjugate() * b).real,
                                             abs(a) ** 2 - abs(b) ** 2)))


def delivered_state(
    src: SourceConfig, ch: FiberChannel, compensator: np.ndarray
) -> np.ndarray:
    """State arriving at the analyzers: source noise, then fiber, then compensator.

    Both transformations act on the signal slot only; the idler never leaves
    the source bench.
    """
    rho = werner_mix(src.target_state, src.visibility)
    u_signal = np.asarray(compensator, dtype=complex) @ ch.unitary(ch.center_wavelength_nm)
    return apply_local(rho, u_signal, np.eye(2, dtype=complex))


@dataclass(frozen=True)
class RateModel:
    """Detection rates seen by the counting electronics for one arrangement."""

    coincidence_cps: float
    singles_signal_cps: float
    singles_idler_cps: float
    accidental_window_s: float | None = None

    @classmethod
    def local(cls, src: SourceConfig) -> "RateModel":
        singles = src.pair_rate_cps / src.heralding_efficiency
        return cls(src.pair_rate_cps, singles, singles)

    @classmethod
    def over_link(cls, src: SourceConfig, total_loss_db: float) -> "RateModel":
        t = transmission(total_loss_db)
        singles = src.pair_rate_cps / src.heralding_efficiency
        return cls(src.pair_rate_cps * t, singles * t, singles)


@dataclass(frozen=True)
class CountRecord:
    """Raw result of one counting window at fixed analyzer settings."""

    signal_setting: AnalyzerSetting
    idler_setting: AnalyzerSetting
    duration_s: float
    coincidences: float
    singles_signal: int
    singles_idler: int
    wall_time: float

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.coincidences < 0 or self.singles_signal < 0 or self.singles_idler < 0:
            raise ValueError("counts must be non-negative")

    def to_dict(self) -> dict:
        return {
            "signal_angle_deg": self.signal_setting.angle_deg,
            "signal_port": self.signal_setting.port,
            "idler_angle_deg": self.idler_setting.angle_deg,
            "idler_port": self.idler_setting.port,
            "duration_s": self.duration_s,
            "coincidences": self.coincidences,
            "singles_signal": self.singles_signal,
            "singles_idler": self.singles_idler,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CountRecord":
        return cls(
            signal_setting=AnalyzerSetting(d["signal_angle_deg"], d["signal_port"]),
            idler_setting=AnalyzerSetting(d["idler_angle_deg"], d["idler_port"]),
            duration_s=d["duration_s"],
            coincidences=d["coincidences"],
            singles_signal=d["singles_signal"],
            singles_idler=d["singles_idler"],
            wall_time=d["wall_time"],
        )


def simulate_counts(
    state: np.ndarray,
    signal_setting: AnalyzerSetting,
    idler_setting: AnalyzerSetting,
    duration_s: float,
    rates: RateModel,
    rng: np.random.Generator,
    wall_time: float = 0.0,
) -> CountRecord:
    """Draw one Poisson counting window for the given joint analyzer setting.

    Coincidences are Poisson with mean rate x outcome probability x duration.
    Accidental coincidences are added only when the rate model carries a
    coincidence window (off by default; the deployed bench never quantified
    them).
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    p = projection_probability(state, signal_setting, idler_setting)
    mean = rates.coincidence_cps * p * duration_s
    if rates.accidental_window_s is not None:
        mean += (
            rates.singles_signal_cps
            * rates.singles_idler_cps
            * rates.accidental_window_s
            * duration_s
        )
    return CountRecord(
        signal_setting=signal_setting,
        idler_setting=idler_setting,
        duration_s=duration_s,
        coincidences=int(rng.poisson(mean)),
        singles_signal=int(rng.poisson(rates.singles_signal_cps * duration_s)),
        singles_idler=int(rng.poisson(rates.singles_idler_cps * duration_s)),
        wall_time=wall_time,
    )


def drift_trace(
    ch: FiberChannel, hours: float, sample_s: float = 60.0
) -> list[tuple[float, int, float]]:
    """Advance the channel and record (time_s, wavelength_nm, azimuth_deg) rows."""
    rows: list[tuple[float, int, float]] = []
    t = 0.0
    end = hours * 3600.0
    for wl in ch.wavelengths_nm:
        rows.append((0.0, wl, ch.drift_state(wl).azimuth_deg))
    while t < end - 1e-9:
        step = min(sample_s, end - t)
        ch.advance(step)
        t += step
        for wl in ch.wavelengths_nm:
            rows.append((t, wl, ch.drift_state(wl).azimuth_deg))
    return rows


def export_drift_trace(rows: list[tuple[float, int, float]], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time_s", "wavelength_nm", "azimuth_deg"])
        for t, wl, az in rows:
            w.writerow([f"{t:.1f}", wl, f"{az:.6f}"])
