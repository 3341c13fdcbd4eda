"""Numerical stand-in for the manual polarization-controller alignment.

The physical procedure turns three paddles of an in-line controller until
the |HH> and |DA> coincidence rates vanish; those two nulls pin the
delivered state to the target up to a global phase.  Here the paddle stack
is modelled as a quarter-half-quarter retarder product (which reaches all
of SU(2) up to phase) and the search is deterministic coordinate descent
with a golden-section line search per paddle, restarted from seeded random
paddle settings when a local minimum is not good enough.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import FiberChannel, SourceConfig
from .polarization import (
    AnalyzerSetting,
    apply_local,
    projection_probability,
    retarder,
    unitary_distance,
    werner_mix,
)

DEFAULT_TOL = 1e-6
DEFAULT_BUDGET = 10_000
DEFAULT_RESTARTS = 8

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ControllerSetting:
    """Paddle angles (degrees) of the quarter-half-quarter compensator stack."""

    q1_deg: float = 0.0
    h_deg: float = 0.0
    q2_deg: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.q1_deg, self.h_deg, self.q2_deg], dtype=float)


def compensator_unitary(setting: ControllerSetting) -> np.ndarray:
    """Jones operator of the paddle stack Q(q1) H(h) Q(q2)."""
    return (
        retarder(setting.q1_deg, np.pi / 2.0)
        @ retarder(setting.h_deg, np.pi)
        @ retarder(setting.q2_deg, np.pi / 2.0)
    )


def objective(rho_delivered: np.ndarray) -> float:
    """Sum of the two null-coincidence probabilities, P(HH) + P(DA)."""
    p_hh = projection_probability(
        rho_delivered, AnalyzerSetting(0.0), AnalyzerSetting(0.0)
    )
    p_da = projection_probability(
        rho_delivered, AnalyzerSetting(45.0), AnalyzerSetting(-45.0)
    )
    return p_hh + p_da


def visibility(rho: np.ndarray, basis: str) -> float:
    """Coincidence fringe contrast with the idler held in the given basis.

    The idler analyzer sits at the basis angle (0 for HV, 45 for DA) while
    the signal analyzer sweeps.  The Born rule makes the coincidence
    probability sinusoidal in twice the signal angle, so the exact extremes
    follow from three probes: P(t) = mean + amp cos(2t + phase).
    """
    if basis == "HV":
        idler = AnalyzerSetting(0.0)
    elif basis == "DA":
        idler = AnalyzerSetting(45.0)
    else:
        raise ValueError(f"unknown visibility basis {basis!r}")
    p0 = projection_probability(rho, AnalyzerSetting(0.0), idler)
    p45 = projection_probability(rho, AnalyzerSetting(45.0), idler)
    p90 = projection_probability(rho, AnalyzerSetting(90.0), idler)
    mean = 0.5 * (p0 + p90)
    amp = np.hypot(0.5 * (p0 - p90), p45 - mean)
    if mean <= 0.0:
        return 0.0
    return float(min(amp / mean, 1.0))


@dataclass(frozen=True)
class CompensationReport:
    setting: ControllerSetting
    objective_value: float
    iterations: int
    visibility_hv: float
    visibility_da: float
    converged: bool
    mixedness_floor: float
    restarts_used: int

    def to_dict(self) -> dict:
        return {
            "q1_deg": self.setting.q1_deg,
            "h_deg": self.setting.h_deg,
            "q2_deg": self.setting.q2_deg,
            "objective_value": self.objective_value,
            "iterations": self.iterations,
            "visibility_hv": self.visibility_hv,
            "visibility_da": self.visibility_da,
            "converged": self.converged,
            "mixedness_floor": self.mixedness_floor,
            "restarts_used": self.restarts_used,
        }


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def spend(self) -> bool:
        if self.used >= self.limit:
            return False
        self.used += 1
        return True


class _CappedBudget:
    """View of a shared budget that additionally stops after ``cap`` spends."""

    def __init__(self, outer: _Budget, cap: int):
        self.outer = outer
        self.limit = min(outer.limit, outer.used + cap)

    def spend(self) -> bool:
        if self.outer.used >= self.limit:
            return False
        return self.outer.spend()

    @property
    def used(self) -> int:
        return self.outer.used


# Deterministic first guesses: the caller's setting (prepended at run time),
# then the four crossed-quarter-plate branches.  The paddle map is locally
# degenerate along its q1 = h = q2 line, so a near-identity fiber with a
# little ellipticity is only reachable from the crossed branches.
_BRANCH_STARTS = (
    (45.0, 45.0, -45.0),
    (-45.0, 45.0, 45.0),
    (45.0, -45.0, -45.0),
    (-45.0, -45.0, 45.0),
)


def _golden_section(f, lo: float, hi: float, budget: _Budget, xtol: float = 1e-5):
    """Golden-section minimum of f on [lo, hi]; returns (x, f(x))."""
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    if not budget.spend():
        return x1, f(x1)
    f1 = f(x1)
    if not budget.spend():
        return x1, f1
    f2 = f(x2)
    while (b - a) > xtol and budget.spend():
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _coordinate_descent(f, x0: np.ndarray, budget: _Budget, tol: float,
                        span_deg: float = 180.0, max_sweeps: int = 60):
    """Cyclic coordinate descent with golden-section line searches.

    The first sweep scans each paddle coarsely over its full period before
    refining; later sweeps bracket around the last move.  After every sweep
    a pattern step (doubling the sweep's net displacement) is tried, which
    keeps progress fast when the minimum sits in a valley diagonal to the
    paddle axes.
    """
    x = np.array(x0, dtype=float)
    fx = f(x)
    budget.spend()
    x_prev = x.copy()
    for sweep in range(max_sweeps):
        improved = False
        for i in range(len(x)):
            if sweep == 0:
                best_c, best_fc = x[i], fx
                for off in np.linspace(-span_deg / 2.0, span_deg / 2.0, 13):
                    if off == 0.0 or not budget.spend():
                        continue
                    trial = x.copy()
                    trial[i] = x[i] + off
                    fc = f(trial)
                    if fc < best_fc:
                        best_c, best_fc = x[i] + off, fc
                half = span_deg / 12.0
            else:
                best_c = x[i]
                half = max(4.0 * abs(x[i] - x_prev[i]), 0.5)

            def f_line(val, i=i):
                trial = x.copy()
                trial[i] = val
                return f(trial)

            c, fc = _golden_section(f_line, best_c - half, best_c + half, budget)
            if fc < fx - 1e-18:
                x[i] = c
                fx = fc
                improved = True
            if fx < tol * 1e-3 or budget.used >= budget.limit:
                return x, fx
        if sweep > 0 and budget.spend():
            pattern = x + (x - x_prev)
            fp = f(pattern)
            if fp < fx:
                x_prev, x, fx = x.copy(), pattern, fp
                continue
        if not improved:
            break
        x_prev = x.copy()
    return x, fx


def optimize_compensation(
    ch: "FiberChannel | np.ndarray",
    src: SourceConfig | None = None,
    init: ControllerSetting = ControllerSetting(),
    tol: float = DEFAULT_TOL,
    budget: int = DEFAULT_BUDGET,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
) -> CompensationReport:
    """Find paddle angles that undo the fiber transformation.

    ``ch`` may be a live channel (a snapshot of its current unitary is
    taken) or a bare 2x2 unitary.  Search runs until the coincidence-null
    objective drops below ``tol`` or the evaluation budget is exhausted;
    failure to converge is reported, not raised.  For visibility v < 1 the
    objective cannot go below the mixedness floor (1 - v)/2, which the
    report includes so callers can classify the outcome.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if src is None:
        src = SourceConfig()
    if isinstance(ch, FiberChannel):
        u_fiber = ch.snapshot_unitary()
    else:
        u_fiber = np.asarray(ch, dtype=complex)
    rho_src = werner_mix(src.target_state, src.visibility)
    eye = np.eye(2, dtype=complex)
    floor = (1.0 - src.visibility) / 2.0

    def f(params: np.ndarray) -> float:
        comp = compensator_unitary(ControllerSetting(*params))
        rho = apply_local(rho_src, comp @ u_fiber, eye)
        return objective(rho)

    # Triage phase: capped descents from the caller's setting, the crossed
    # branches, and seeded random paddles; then a polish phase resumes the
    # best point with whatever budget remains.
    tracker = _Budget(budget)
    target = tol + floor
    rng = np.random.default_rng(seed)
    best_x, best_f = None, np.inf
    restarts_used = 0
    start_idx = 0
    while tracker.used < int(budget * 0.6):
        if start_idx == 0:
            x0, cap = init.as_array(), 2500
        elif start_idx <= len(_BRANCH_STARTS):
            x0, cap = np.array(_BRANCH_STARTS[start_idx - 1]), 1200
        elif restarts_used < restarts:
            x0, cap = rng.uniform(-90.0, 90.0, size=3), 1000
            restarts_used += 1
        else:
            break
        start_idx += 1
        x, fx = _coordinate_descent(f, x0, _CappedBudget(tracker, cap), target)
        if fx < best_f:
            best_x, best_f = x, fx
        if best_f - floor < tol:
            break
    if best_f - floor >= tol and tracker.used < budget:
        x, fx = _coordinate_descent(f, best_x, tracker, target, max_sweeps=400)
        if fx < best_f:
            best_x, best_f = x, fx

    setting = ControllerSetting(*(float(v) for v in best_x))
    comp = compensator_unitary(setting)
    rho_final = apply_local(rho_src, comp @ u_fiber, eye)
    return CompensationReport(
        setting=setting,
        objective_value=float(best_f),
        iterations=tracker.used,
        visibility_hv=visibility(rho_final, "HV"),
        visibility_da=visibility(rho_final, "DA"),
        converged=bool(best_f - floor < tol),
        mixedness_floor=floor,
        restarts_used=restarts_used,
    )


def solve_for_unitary(
    target: np.ndarray,
    tol: float = 1e-6,
    budget: int = 20_000,
    restarts: int = 8,
    seed: int = 0,
) -> tuple[ControllerSetting, float]:
    """Paddle angles realizing a target unitary, by phase-free matrix distance."""

    def f(params: np.ndarray) -> float:
        return unitary_distance(compensator_unitary(ControllerSetting(*params)), target)

    tracker = _Budget(budget)
    starts = [np.zeros(3)] + [np.array(s) for s in _BRANCH_STARTS]
    rng = np.random.default_rng(seed)
    starts += [rng.uniform(-90, 90, 3) for _ in range(restarts)]
    best_x, best_f = None, np.inf
    for x0 in starts:
        x, fx = _coordinate_descent(f, x0, _CappedBudget(tracker, 2500), tol)
        if fx < best_f:
            best_x, best_f = x, fx
        if best_f < tol or tracker.used >= budget:
            break
    return ControllerSetting(*(float(v) for v in best_x)), float(best_f)
