"""Replayed results for when the live bench is unavailable.

A stored sweep of |S| versus angle difference stands in for a live run:
the requested angles are mapped to their difference and the table is
linearly interpolated.  Replayed results carry ``live=False`` so every
display downstream can badge them honestly.
"""

from __future__ import annotations

import numpy as np

from .chsh import ChshResult, chsh_ideal, settings_from_user
from .polarization import canonical_angle


class FallbackUnavailableError(RuntimeError):
    pass


def default_sweep_table(
    visibility: float = 0.884,
    sigma: float = 0.06,
    step_deg: float = 2.5,
) -> list[tuple[float, float, float]]:
    """Reference (delta, S, sigma) rows spanning the canonical delta range."""
    deltas = np.arange(-90.0, 90.0 + step_deg / 2, step_deg)
    return [(float(d), chsh_ideal(visibility, d), sigma) for d in deltas]


def fallback_result(
    a_deg: float,
    a_prime_deg: float,
    table: list[tuple[float, float, float]],
    wall_time: float = 0.0,
) -> ChshResult:
    """Nearest-delta lookup with linear interpolation, flagged non-live."""
    if not table:
        raise FallbackUnavailableError("no stored sweep table")
    settings = settings_from_user(a_deg, a_prime_deg)
    delta = canonical_angle(settings.delta)
    rows = sorted(table)
    deltas = np.array([r[0] for r in rows])
    s_vals = np.array([r[1] for r in rows])
    sigmas = np.array([r[2] for r in rows])
    s = float(np.interp(delta, deltas, s_vals))
    sigma = float(np.interp(delta, deltas, sigmas))
    # synthesize the per-pair correlations the interpolated S implies
    denom = np.sqrt(2.0) * (1.0 + np.sin(2.0 * np.deg2rad(delta)))
    v_eff = min(s / denom, 1.0) if denom > 1e-9 else 0.0
    offsets = (22.5, 22.5 + delta, 22.5 - delta, 22.5)
    e_terms = tuple(
        (-v_eff * np.cos(2.0 * np.deg2rad(off)), sigma / 2.0) for off in offsets
    )
    return ChshResult(
        s_value=s,
        sigma_s=sigma,
        e_terms=e_terms,
        settings=settings,
        live=False,
        wall_time=wall_time,
    )
