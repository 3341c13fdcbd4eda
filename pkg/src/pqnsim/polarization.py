"""Two-photon polarization algebra: states, waveplates, projectors, correlations.

Conventions used throughout the package:

* Jones basis |H> = (1, 0), |V> = (0, 1).
* Two-photon density operators are 4x4 complex arrays in the basis order
  |HH>, |HV>, |VH>, |VV>, with the signal photon in the first slot.
* All angles at API boundaries are degrees; radians appear only inside
  function bodies.  Linear-polarization angles live on a 180-degree circle
  and are canonicalized to the half-open range (-90, +90].
* Global phases are physically meaningless and never compared; state
  equality is always a density-operator distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERM_TOL = 1e-12
EIG_FLOOR = -1e-9

KET_H = np.array([1.0, 0.0], dtype=complex)
KET_V = np.array([0.0, 1.0], dtype=complex)

_BASIS_KETS = {
    "H": KET_H,
    "V": KET_V,
    "D": np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0),
    "A": np.array([1.0, -1.0], dtype=complex) / np.sqrt(2.0),
    "R": np.array([1.0, -1.0j], dtype=complex) / np.sqrt(2.0),
    "L": np.array([1.0, 1.0j], dtype=complex) / np.sqrt(2.0),
}


def canonical_angle(angle_deg: float) -> float:
    """Map a linear-polarization angle onto the canonical range (-90, +90].

    Idempotent, and invariant under adding multiples of 180 degrees.
    """
    m = float(angle_deg) % 180.0
    if m > 90.0:
        m -= 180.0
    return m


def angle_distance(a_deg: float, b_deg: float) -> float:
    """Unsigned distance between two analyzer angles on the 180-degree circle."""
    d = abs(canonical_angle(a_deg) - canonical_angle(b_deg))
    return min(d, 180.0 - d)


def linear_ket(angle_deg: float) -> np.ndarray:
    """Jones vector of linear polarization at the given angle from H."""
    t = np.deg2rad(angle_deg)
    return np.array([np.cos(t), np.sin(t)], dtype=complex)


def basis_ket(label: str) -> np.ndarray:
    """Single-photon ket for one of the labels H, V, D, A, R, L."""
    try:
        return _BASIS_KETS[label].copy()
    except KeyError:
        raise KeyError(f"unknown polarization label {label!r}") from None


@dataclass(frozen=True)
class AnalyzerSetting:
    """One arm of a projective polarization analyzer.

    ``transmitted`` projects onto the linear state at ``angle_deg``;
    ``reflected`` projects onto the orthogonal state at ``angle_deg + 90``.
    The two ports of one setting therefore sum to the identity.
    """

    angle_deg: float
    port: str = "transmitted"

    def __post_init__(self) -> None:
        if self.port not in ("transmitted", "reflected"):
            raise ValueError(f"unknown analyzer port {self.port!r}")

    def ket(self) -> np.ndarray:
        offset = 0.0 if self.port == "transmitted" else 90.0
        return linear_ket(self.angle_deg + offset)

    def projector(self) -> np.ndarray:
        k = self.ket()
        return np.outer(k, k.conj())


def pure_state(ket: np.ndarray) -> np.ndarray:
    """Density operator |psi><psi| of a normalized ket."""
    k = np.asarray(ket, dtype=complex)
    k = k / np.linalg.norm(k)
    return np.outer(k, k.conj())


def make_psi_plus() -> np.ndarray:
    """Maximally entangled state (|HV> + |VH>)/sqrt(2) as a density operator.

    Equivalently (|DD> - |AA>)/sqrt(2): it has no |HH> or |DA> component.
    """
    ket = np.zeros(4, dtype=complex)
    ket[1] = ket[2] = 1.0 / np.sqrt(2.0)
    return pure_state(ket)


def maximally_mixed() -> np.ndarray:
    return np.eye(4, dtype=complex) / 4.0


def validate_state(rho: np.ndarray) -> np.ndarray:
    """Check the density-operator invariants; returns the input on success."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"expected a 4x4 density operator, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-9:
        raise ValueError("density operator is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-9:
        raise ValueError("density operator trace is not 1")
    if np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)) < EIG_FLOOR:
        raise ValueError("density operator has a negative eigenvalue")
    return rho


def is_unitary(u: np.ndarray, tol: float = HERM_TOL) -> bool:
    u = np.asarray(u, dtype=complex)
    return u.shape == (2, 2) and np.max(np.abs(u @ u.conj().T - np.eye(2))) <= tol


def unitary_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Frobenius distance between 2x2 unitaries minimized over global phase."""
    overlap = abs(np.trace(u.conj().T @ v))
    return float(np.sqrt(max(4.0 - 2.0 * overlap, 0.0)))


def rotation_unitary(angle_deg: float) -> np.ndarray:
    """Rotation of the polarization plane by the given angle."""
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s], [s, c]], dtype=complex)


def retarder(fast_axis_deg: float, retardance_rad: float) -> np.ndarray:
    """Jones operator of a linear retarder, symmetric phase convention."""
    r = rotation_unitary(fast_axis_deg)
    d = np.diag(
        [np.exp(-0.5j * retardance_rad), np.exp(0.5j * retardance_rad)]
    ).astype(complex)
    return r @ d @ r.conj().T


def waveplate_unitary(kind: str, fast_axis_deg: float) -> np.ndarray:
    """Half- or quarter-wave plate at the given fast-axis angle.

    A half-wave plate at fast axis t maps linear polarization at angle p to
    linear polarization at 2t - p (up to a global phase).
    """
    if kind == "half":
        return retarder(fast_axis_deg, np.pi)
    if kind == "quarter":
        return retarder(fast_axis_deg, np.pi / 2.0)
    raise ValueError(f"unknown waveplate kind {kind!r}")


def apply_local(rho: np.ndarray, u_signal: np.ndarray, u_idler: np.ndarray) -> np.ndarray:
    """Apply independent single-photon unitaries to the signal and idler slots."""
    w = np.kron(np.asarray(u_signal, dtype=complex), np.asarray(u_idler, dtype=complex))
    return w @ np.asarray(rho, dtype=complex) @ w.conj().T


def werner_mix(rho: np.ndarray, visibility: float) -> np.ndarray:
    """Isotropic mixture v*rho + (1-v)*I/4.

    The single noise knob of the simulation: a scalar visibility is all the
    bench characterization reports, and the isotropic channel is the unique
    one reproducing it basis-independently.
    """
    v = float(visibility)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must be in [0, 1], got {v}")
    return v * np.asarray(rho, dtype=complex) + (1.0 - v) * maximally_mixed()


def projection_probability(
    rho: np.ndarray, signal: AnalyzerSetting, idler: AnalyzerSetting
) -> float:
    """Born-rule probability Tr[(P_s x P_i) rho] of a joint analyzer outcome."""
    proj = np.kron(signal.projector(), idler.projector())
    p = float(np.trace(proj @ rho).real)
    return min(max(p, 0.0), 1.0)


def correlation_E(rho: np.ndarray, a_deg: float, b_deg: float) -> float:
    """Correlation of +/-1 outcomes at analyzer angles a (signal) and b (idler).

    E = P(++) + P(--) - P(+-) - P(-+) over the four port combinations,
    with "+" the transmitted port.
    """
    e = 0.0
    for sp, sign_s in (("transmitted", 1.0), ("reflected", -1.0)):
        for ip, sign_i in (("transmitted", 1.0), ("reflected", -1.0)):
            p = projection_probability(
                rho, AnalyzerSetting(a_deg, sp), AnalyzerSetting(b_deg, ip)
            )
            e += sign_s * sign_i * p
    return e


def fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """Overlap <psi|rho|psi> with a pure target state given as a density operator."""
    target = np.asarray(target, dtype=complex)
    purity = float(np.trace(target @ target).real)
    if abs(purity - 1.0) > 1e-6:
        raise ValueError(f"fidelity target must be pure, purity={purity:.6f}")
    return float(np.trace(np.asarray(rho, dtype=complex) @ target).real)


def haar_unitary(rng: np.random.Generator) -> np.ndarray:
    """Haar-random 2x2 unitary (QR of a complex Gaussian matrix)."""
    z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
