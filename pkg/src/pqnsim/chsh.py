"""CHSH estimation from raw counts, ideal curves, tomography, and fidelity series.

Sign convention: the deployed signal path contains one extra coordinate
reflection, so a commanded analyzer angle ``x`` on the signal arm projects
onto the linear state at ``-x``.  For the isotropically mixed entangled
state this gives E(a, b) = -v cos 2(b - a): the correlation depends only on
the angle difference, the +22.5-degree idler offset makes
S = E(a,b) - E(a,b') + E(a',b) + E(a',b') equal -sqrt(2) v (1 + sin 2 delta)
with delta = a' - a, and |S| peaks at 2 sqrt(2) v for delta = 45 degrees.
All of this is oracle-verified in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import csv
import numpy as np

from .channel import CountRecord
from .polarization import (
    AnalyzerSetting,
    angle_distance,
    basis_ket,
    canonical_angle,
    make_psi_plus,
    projection_probability,
    pure_state,
    werner_mix,
)

IDLER_OFFSET_DEG = 22.5

# Port combination order used everywhere a measurement matrix is built:
# (signal port, idler port) with "+" = transmitted, "-" = reflected.
PORT_COMBOS: tuple[tuple[str, str], ...] = (
    ("transmitted", "transmitted"),
    ("transmitted", "reflected"),
    ("reflected", "transmitted"),
    ("reflected", "reflected"),
)

# Signs of the four E terms in S, pair order (a,b), (a,b'), (a',b), (a',b').
E_TERM_SIGNS = (1.0, -1.0, 1.0, 1.0)


class InsufficientDataError(ValueError):
    """Raised when an estimator receives zero total counts."""


class MatrixStructureError(ValueError):
    """Raised when a measurement matrix is incomplete or mislabelled."""


@dataclass(frozen=True)
class ChshSettings:
    """The four analyzer angles of one run, derived from the two user choices."""

    a: float
    a_prime: float
    b: float
    b_prime: float
    delta: float

    def angle_pairs(self) -> tuple[tuple[float, float], ...]:
        """(signal, idler) angle pairs in canonical measurement order."""
        return (
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        )

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "a_prime": self.a_prime,
            "b": self.b,
            "b_prime": self.b_prime,
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChshSettings":
        return cls(d["a"], d["a_prime"], d["b"], d["b_prime"], d["delta"])


def settings_from_user(a_deg: float, a_prime_deg: float) -> ChshSettings:
    """Derive the full angle set from the two publicly chosen angles.

    The bench-side angles are offset from the user angles by +22.5 degrees.
    All angles are canonicalized, so shifting an input by 180 degrees
    changes nothing.
    """
    a = canonical_angle(a_deg)
    ap = canonical_angle(a_prime_deg)
    return ChshSettings(
        a=a,
        a_prime=ap,
        b=canonical_angle(a + IDLER_OFFSET_DEG),
        b_prime=canonical_angle(ap + IDLER_OFFSET_DEG),
        delta=canonical_angle(ap - a),
    )


def correlation_from_counts(
    n_pp: float, n_pm: float, n_mp: float, n_mm: float
) -> tuple[float, float]:
    """Correlation estimate and its Poisson-propagated standard error.

    E = (n_pp + n_mm - n_pm - n_mp) / T with T the total, and
    sigma_E^2 = [(1-E)^2 (n_pp + n_mm) + (1+E)^2 (n_pm + n_mp)] / T^2,
    which reduces to (1 - E^2)/T for Poisson-distributed inputs.
    """
    for n in (n_pp, n_pm, n_mp, n_mm):
        if n < 0:
            raise ValueError("counts must be non-negative")
    total = n_pp + n_pm + n_mp + n_mm
    if total <= 0:
        raise InsufficientDataError("zero total counts in correlation estimate")
    agree = n_pp + n_mm
    disagree = n_pm + n_mp
    e = (agree - disagree) / total
    var = ((1.0 - e) ** 2 * agree + (1.0 + e) ** 2 * disagree) / total**2
    return float(e), float(np.sqrt(var))


@dataclass(frozen=True)
class MeasurementMatrix:
    """The 16 counting windows of one run: 4 angle pairs x 4 port combinations.

    Records are stored in canonical order: for each angle pair of
    ``settings.angle_pairs()``, the four PORT_COMBOS in sequence.  Port
    selection may be recorded either explicitly (``reflected``) or as a
    +90-degree analyzer offset with a single-output detector; validation
    accepts both since they project onto the same state.
    """

    settings: ChshSettings
    records: tuple[CountRecord, ...]

    def __post_init__(self) -> None:
        if len(self.records) != 16:
            raise MatrixStructureError(
                f"measurement matrix needs 16 records, got {len(self.records)}"
            )
        for slot, rec in enumerate(self.records):
            pair = self.settings.angle_pairs()[slot // 4]
            ports = PORT_COMBOS[slot % 4]
            for want_angle, want_port, setting, arm in (
                (pair[0], ports[0], rec.signal_setting, "signal"),
                (pair[1], ports[1], rec.idler_setting, "idler"),
            ):
                want = want_angle + (90.0 if want_port == "reflected" else 0.0)
                got = setting.angle_deg + (90.0 if setting.port == "reflected" else 0.0)
                if angle_distance(want, got) > 1e-6:
                    raise MatrixStructureError(
                        f"slot {slot}: {arm} analyzer at {got:.4f} deg, "
                        f"expected {canonical_angle(want):.4f} deg"
                    )

    def pair_counts(self, pair_index: int) -> tuple[float, float, float, float]:
        recs = self.records[4 * pair_index : 4 * pair_index + 4]
        return tuple(r.coincidences for r in recs)  # type: ignore[return-value]


@dataclass(frozen=True)
class ChshResult:
    """CHSH magnitude with uncertainty; ``live`` is False for replayed results."""

    s_value: float
    sigma_s: float
    e_terms: tuple[tuple[float, float], ...]
    settings: ChshSettings
    live: bool
    wall_time: float

    def __post_init__(self) -> None:
        if len(self.e_terms) != 4:
            raise ValueError("need exactly four E terms")
        if abs(self.s_value) > 4.0 + 1e-9:
            raise ValueError("|S| cannot exceed 4")
        for e, _ in self.e_terms:
            if abs(e) > 1.0 + 1e-9:
                raise ValueError("|E| cannot exceed 1")

    def to_dict(self) -> dict:
        return {
            "s_value": self.s_value,
            "sigma_s": self.sigma_s,
            "e_terms": [[e, s] for e, s in self.e_terms],
            "settings": self.settings.to_dict(),
            "live": self.live,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChshResult":
        return cls(
            s_value=d["s_value"],
            sigma_s=d["sigma_s"],
            e_terms=tuple((e, s) for e, s in d["e_terms"]),
            settings=ChshSettings.from_dict(d["settings"]),
            live=d["live"],
            wall_time=d["wall_time"],
        )


def chsh_from_matrix(m: MeasurementMatrix, live: bool = True, wall_time: float = 0.0) -> ChshResult:
    """Combine the 16 windows into |S| with propagated uncertainty.

    S = E(a,b) - E(a,b') + E(a',b) + E(a',b'); the reported value is |S|
    and sigma_S is the root sum of the four sigma_E^2.
    """
    e_terms = []
    s_signed = 0.0
    var = 0.0
    for i, sign in enumerate(E_TERM_SIGNS):
        e, sig = correlation_from_counts(*m.pair_counts(i))
        e_terms.append((e, sig))
        s_signed += sign * e
        var += sig**2
    return ChshResult(
        s_value=abs(s_signed),
        sigma_s=float(np.sqrt(var)),
        e_terms=tuple(e_terms),
        settings=m.settings,
        live=live,
        wall_time=wall_time,
    )


def chsh_ideal(visibility: float, delta_deg: float) -> float:
    """Noiseless |S| for the mixed entangled state at angle difference delta."""
    v = float(visibility)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must be in [0, 1], got {v}")
    return float(np.sqrt(2.0) * v * (1.0 + np.sin(2.0 * np.deg2rad(delta_deg))))


def mirrored_setting(angle_deg: float, port: str = "transmitted") -> AnalyzerSetting:
    """Signal-arm projector for a commanded angle, including the path reflection."""
    return AnalyzerSetting(-angle_deg, port)


def exact_pair_probabilities(
    state: np.ndarray, signal_deg: float, idler_deg: float
) -> tuple[float, float, float, float]:
    """Born probabilities of the four port combinations at one angle pair.

    The signal projector is mirrored, matching the deployed path.
    """
    return tuple(
        projection_probability(
            state, mirrored_setting(signal_deg, sp), AnalyzerSetting(idler_deg, ip)
        )
        for sp, ip in PORT_COMBOS
    )  # type: ignore[return-value]


def exact_measurement_matrix(
    visibility: float, settings: ChshSettings, scale: float = 1.0
) -> MeasurementMatrix:
    """Noiseless measurement matrix: records carry expected counts, not draws.

    ``scale`` plays the role of rate x duration; correlations are scale-free.
    """
    state = werner_mix(make_psi_plus(), visibility)
    records = []
    for sig, idl in settings.angle_pairs():
        probs = exact_pair_probabilities(state, sig, idl)
        for (sp, ip), p in zip(PORT_COMBOS, probs):
            records.append(
                CountRecord(
                    signal_setting=AnalyzerSetting(sig, sp),
                    idler_setting=AnalyzerSetting(idl, ip),
                    duration_s=1.0,
                    coincidences=p * scale,
                    singles_signal=0,
                    singles_idler=0,
                    wall_time=0.0,
                )
            )
    return MeasurementMatrix(settings=settings, records=tuple(records))


# --- quantum state tomography --------------------------------------------

TOMOGRAPHY_LABELS = ("H", "V", "D", "A", "R", "L")

_BASIS_OF_LABEL = {"H": "Z", "V": "Z", "D": "X", "A": "X", "R": "Y", "L": "Y"}
_SIGN_OF_LABEL = {"H": 1.0, "V": -1.0, "D": 1.0, "A": -1.0, "R": 1.0, "L": -1.0}
_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def tomography_settings() -> tuple[tuple[str, str], ...]:
    """The 36 joint projector labels used for state reconstruction."""
    return tuple(
        (s, i) for s in TOMOGRAPHY_LABELS for i in TOMOGRAPHY_LABELS
    )


def tomography_probabilities(rho: np.ndarray) -> dict[tuple[str, str], float]:
    """Exact Born probabilities of all 36 joint projectors."""
    probs = {}
    for s_label, i_label in tomography_settings():
        proj = np.kron(
            pure_state(basis_ket(s_label)), pure_state(basis_ket(i_label))
        )
        probs[(s_label, i_label)] = float(np.trace(proj @ rho).real)
    return probs


def simulate_tomography_counts(
    rho: np.ndarray,
    rate_cps: float,
    dwell_s: float,
    rng: np.random.Generator,
) -> dict[tuple[str, str], int]:
    """Poisson counting over the full 36-projector schedule."""
    probs = tomography_probabilities(rho)
    return {
        key: int(rng.poisson(rate_cps * dwell_s * p)) for key, p in probs.items()
    }


@dataclass(frozen=True)
class TomographyResult:
    rho_hat: np.ndarray
    fidelity_to_target: float
    settings_used: int
    negative_eigenvalues: bool


def tomography_linear_inversion(
    counts: Mapping[tuple[str, str], float],
    target: np.ndarray | None = None,
    clip_to_physical: bool = False,
) -> TomographyResult:
    """Reconstruct a two-photon state from 36-projector counts by linear inversion.

    Counts are normalized within each of the nine basis-pair groups; the
    joint and single-arm Pauli expectation values then determine the state
    exactly on noise-free data.  The raw inversion may carry negative
    eigenvalues under counting noise; it is returned as-is and flagged
    unless ``clip_to_physical`` asks for projection onto the nearest state
    with non-negative spectrum.
    """
    missing = [k for k in tomography_settings() if k not in counts]
    if missing:
        raise MatrixStructureError(
            f"tomography record set incomplete: {len(missing)} of 36 missing"
        )

    bases = ("Z", "X", "Y")
    pos = {"Z": ("H", "V"), "X": ("D", "A"), "Y": ("R", "L")}
    t_joint = np.zeros((3, 3))
    t_signal = np.zeros(3)
    t_idler = np.zeros(3)
    n_groups_signal = np.zeros(3)
    n_groups_idler = np.zeros(3)

    for bi, b1 in enumerate(bases):
        for bj, b2 in enumerate(bases):
            group = [
                (l1, l2) for l1 in pos[b1] for l2 in pos[b2]
            ]
            total = float(sum(counts[k] for k in group))
            if total <= 0:
                raise InsufficientDataError(
                    f"no counts in tomography basis pair {b1}{b2}"
                )
            for l1, l2 in group:
                p = counts[(l1, l2)] / total
                sgn1 = _SIGN_OF_LABEL[l1]
                sgn2 = _SIGN_OF_LABEL[l2]
                t_joint[bi, bj] += sgn1 * sgn2 * p
                t_signal[bi] += sgn1 * p
                t_idler[bj] += sgn2 * p
            n_groups_signal[bi] += 1
            n_groups_idler[bj] += 1

    # every single-arm expectation was accumulated once per partner basis
    t_signal /= n_groups_signal
    t_idler /= n_groups_idler

    rho = np.eye(4, dtype=complex)
    for bi, b1 in enumerate(bases):
        rho += t_signal[bi] * np.kron(_PAULI[b1], np.eye(2))
        rho += t_idler[bi] * np.kron(np.eye(2), _PAULI[b1])
        for bj, b2 in enumerate(bases):
            rho += t_joint[bi, bj] * np.kron(_PAULI[b1], _PAULI[b2])
    rho /= 4.0
    rho = (rho + rho.conj().T) / 2.0
    rho /= np.trace(rho).real

    eigvals, eigvecs = np.linalg.eigh(rho)
    negative = bool(np.min(eigvals) < -1e-9)
    if clip_to_physical and negative:
        clipped = np.clip(eigvals, 0.0, None)
        clipped /= clipped.sum()
        rho = (eigvecs * clipped) @ eigvecs.conj().T
        negative = False

    if target is None:
        target = make_psi_plus()
    fid = float(np.trace(rho @ target).real)
    return TomographyResult(
        rho_hat=rho,
        fidelity_to_target=fid,
        settings_used=36,
        negative_eigenvalues=negative,
    )


def fidelity_series(
    visibility: float = 0.884,
    hours: float = 20.0,
    interval_min: float = 30.0,
    pair_rate_cps: float = 3000.0,
    dwell_s: float = 30.0,
    seed: int = 0,
    noiseless: bool = False,
) -> list[tuple[float, float]]:
    """Repeated source characterization: (time_s, fidelity) every interval.

    Both photons stay local, so no link loss applies; the number of points
    is hours/interval + 1 including t = 0.
    """
    rho = werner_mix(make_psi_plus(), visibility)
    target = make_psi_plus()
    n_points = int(round(hours * 60.0 / interval_min)) + 1
    out = []
    for k in range(n_points):
        t_s = k * interval_min * 60.0
        if noiseless:
            probs = tomography_probabilities(rho)
            result = tomography_linear_inversion(probs, target)
        else:
            rng = np.random.default_rng([seed, k])
            counts = simulate_tomography_counts(rho, pair_rate_cps, dwell_s, rng)
            result = tomography_linear_inversion(counts, target)
        out.append((t_s, result.fidelity_to_target))
    return out


def export_sweep_csv(rows: Sequence[tuple[float, float, float]], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["delta_deg", "s_value", "sigma_s"])
        for delta, s, sigma in rows:
            w.writerow([f"{delta:.4f}", f"{s:.6f}", f"{sigma:.6f}"])


def export_fidelity_csv(rows: Sequence[tuple[float, float]], path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time_s", "fidelity"])
        for t, fid in rows:
            w.writerow([f"{t:.1f}", f"{fid:.6f}"])
