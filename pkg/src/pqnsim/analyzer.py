"""Public basis-selection station: four-way polarization split and angle readout.

A laser passes through the user's rotatable half-wave assembly and is split
into horizontal, vertical, diagonal, and anti-diagonal paths, each read by
a photoresistor through a 10-bit ADC.  Per-channel running min/max
calibration turns raw readings into normalized intensities, from which the
linear polarization angle is reconstructed as

    theta = sign(P_d - P_a) * arccos(sqrt(P_h))

with the arccosine taken in radians and converted to degrees.  (Some write
this relation with a 1/pi prefactor, which yields half-turns instead of an
angle; a degree-labelled display wants the 180/pi conversion used here.)
The angle is only recoverable modulo 180 degrees, and at exactly +/-90 the
sign is undefined (P_d = P_a); the tie is broken toward +90.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .polarization import canonical_angle

ADC_MAX = 1023.0
CHANNELS = ("h", "v", "d", "a")
_AXIS_DEG = {"h": 0.0, "v": 90.0, "d": 45.0, "a": -45.0}

DEFAULT_GAINS = (900.0, 900.0, 900.0, 900.0)
DEFAULT_AMBIENT = 40.0


class CalibrationRequiredError(RuntimeError):
    """Raised when normalization is requested before min < max on every channel."""


@dataclass(frozen=True)
class AnalyzerFrame:
    """One sample of the four photoresistor readings, in ADC units [0, 1023]."""

    r_h: float
    r_v: float
    r_d: float
    r_a: float

    def __post_init__(self) -> None:
        for r in self.as_tuple():
            if not 0.0 <= r <= ADC_MAX:
                raise ValueError(f"reading {r} outside ADC range [0, {ADC_MAX:g}]")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.r_h, self.r_v, self.r_d, self.r_a)

    def to_dict(self) -> dict:
        return {"r_h": self.r_h, "r_v": self.r_v, "r_d": self.r_d, "r_a": self.r_a}

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyzerFrame":
        return cls(d["r_h"], d["r_v"], d["r_d"], d["r_a"])


@dataclass
class CalibrationState:
    """Per-channel extremes observed while the user sweeps the wheel."""

    minima: dict = field(default_factory=dict)
    maxima: dict = field(default_factory=dict)

    def is_complete(self) -> bool:
        return all(
            c in self.minima and self.maxima[c] > self.minima[c] for c in CHANNELS
        )

    def reset(self) -> None:
        self.minima.clear()
        self.maxima.clear()


def simulate_frame(
    theta_deg: float,
    gains: tuple[float, float, float, float] = DEFAULT_GAINS,
    ambient: float = DEFAULT_AMBIENT,
    noise_sd: float = 0.0,
    rng: np.random.Generator | None = None,
    n_samples: int = 1,
) -> AnalyzerFrame:
    """Photoresistor frame for a wheel angle, Malus's law per channel.

    ``n_samples`` models on-board averaging of raw ADC reads before a frame
    is emitted; the Gaussian noise shrinks by its square root.
    """
    if any(g <= 0 for g in gains):
        raise ValueError("gains must be positive")
    if noise_sd > 0 and rng is None:
        raise ValueError("an rng is required when noise_sd > 0")
    readings = []
    for gain, ch in zip(gains, CHANNELS):
        mean = gain * np.cos(np.deg2rad(theta_deg - _AXIS_DEG[ch])) ** 2 + ambient
        if noise_sd > 0:
            mean += noise_sd / np.sqrt(n_samples) * rng.standard_normal()
        readings.append(float(np.clip(mean, 0.0, ADC_MAX)))
    return AnalyzerFrame(*readings)


def update_calibration(cal: CalibrationState, frame: AnalyzerFrame) -> CalibrationState:
    """Widen the per-channel extremes to include a frame; idempotent."""
    for ch, r in zip(CHANNELS, frame.as_tuple()):
        cal.minima[ch] = min(cal.minima.get(ch, r), r)
        cal.maxima[ch] = max(cal.maxima.get(ch, r), r)
    return cal


def ideal_calibration(
    gains: tuple[float, float, float, float] = DEFAULT_GAINS,
    ambient: float = DEFAULT_AMBIENT,
) -> CalibrationState:
    """Calibration an exhaustive noiseless sweep would converge to."""
    cal = CalibrationState()
    for ch, gain in zip(CHANNELS, gains):
        cal.minima[ch] = float(np.clip(ambient, 0.0, ADC_MAX))
        cal.maxima[ch] = float(np.clip(gain + ambient, 0.0, ADC_MAX))
    return cal


def normalize(
    cal: CalibrationState, frame: AnalyzerFrame
) -> tuple[float, float, float, float]:
    """Map raw readings to [0, 1] with the calibrated extremes; always clipped."""
    if not cal.is_complete():
        raise CalibrationRequiredError(
            "normalization needs min < max on every channel; redo the sweep"
        )
    out = []
    for ch, r in zip(CHANNELS, frame.as_tuple()):
        lo, hi = cal.minima[ch], cal.maxima[ch]
        out.append(float(np.clip((r - lo) / (hi - lo), 0.0, 1.0)))
    return tuple(out)  # type: ignore[return-value]


def reconstruct_angle(p_h: float, p_d: float, p_a: float) -> float:
    """Effective linear polarization angle from three normalized intensities."""
    magnitude = np.rad2deg(np.arccos(np.sqrt(np.clip(p_h, 0.0, 1.0))))
    sign = 1.0 if p_d >= p_a else -1.0
    return canonical_angle(sign * magnitude)


def round_trip_error(
    theta_grid: np.ndarray,
    noise_sd: float = 0.0,
    gains: tuple[float, float, float, float] = DEFAULT_GAINS,
    ambient: float = DEFAULT_AMBIENT,
    n_samples: int = 4000,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst-case |reconstructed - true| over a grid, with ideal calibration.

    Distances are taken on the 180-degree circle, so the +/-90 boundary is a
    single point.  Noisy runs reconstruct from frames averaged over
    ``n_samples`` raw reads, as the station firmware does between emitted
    frames.
    """
    cal = ideal_calibration(gains, ambient)
    worst = 0.0
    for theta in np.asarray(theta_grid, dtype=float):
        frame = simulate_frame(theta, gains, ambient, noise_sd, rng, n_samples)
        p_h, _, p_d, p_a = normalize(cal, frame)
        est = reconstruct_angle(p_h, p_d, p_a)
        d = abs(est - canonical_angle(theta)) % 180.0
        worst = max(worst, min(d, 180.0 - d))
    return worst


class AnalyzerStation:
    """Live station state as the gateway daemon sees it.

    One poller mutates the wheel angle and calibration; frame emission and
    reconstruction are pure given that state.
    """

    def __init__(
        self,
        gains: tuple[float, float, float, float] = DEFAULT_GAINS,
        ambient: float = DEFAULT_AMBIENT,
        noise_sd: float = 2.0,
        samples_per_frame: int = 64,
        seed: int = 0,
        start_calibrated: bool = True,
    ):
        self.gains = gains
        self.ambient = ambient
        self.noise_sd = noise_sd
        self.samples_per_frame = samples_per_frame
        self.wheel_deg = 0.0
        self._rng = np.random.default_rng(seed)
        self.calibration = (
            ideal_calibration(gains, ambient) if start_calibrated else CalibrationState()
        )
        self.calibrating = False
        self._swept: list[float] = []

    def set_wheel(self, theta_deg: float) -> None:
        self.wheel_deg = canonical_angle(theta_deg)
        if self.calibrating:
            self._swept.append(self.wheel_deg)

    def frame(self) -> AnalyzerFrame:
        f = simulate_frame(
            self.wheel_deg,
            self.gains,
            self.ambient,
            self.noise_sd,
            self._rng,
            self.samples_per_frame,
        )
        if self.calibrating:
            update_calibration(self.calibration, f)
        return f

    def reading(self) -> dict | None:
        """Normalized intensities plus reconstructed angle, None if uncalibrated."""
        try:
            p = normalize(self.calibration, self.frame())
        except CalibrationRequiredError:
            return None
        return {
            "p_h": p[0],
            "p_v": p[1],
            "p_d": p[2],
            "p_a": p[3],
            "angle_deg": reconstruct_angle(p[0], p[2], p[3]),
        }

    def start_calibration(self) -> None:
        self.calibration = CalibrationState()
        self.calibrating = True
        self._swept = [self.wheel_deg]

    def sweep_coverage_deg(self) -> float:
        """Span of wheel angles visited during the current calibration sweep."""
        if not self._swept:
            return 0.0
        # span on the half-circle: widest gap between sorted samples closes it
        pts = np.sort(np.mod(np.asarray(self._swept, dtype=float), 180.0))
        if len(pts) == 1:
            return 0.0
        gaps = np.diff(np.concatenate([pts, [pts[0] + 180.0]]))
        return float(180.0 - np.max(gaps))

    def finish_calibration(self, min_coverage_deg: float = 160.0) -> bool:
        """Accept the sweep if coverage suffices; stays calibrating otherwise."""
        if self.sweep_coverage_deg() < min_coverage_deg:
            return False
        self.calibrating = False
        return True
