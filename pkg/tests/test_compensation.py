import numpy as np
import pytest

from pqnsim.channel import FiberChannel, SourceConfig, delivered_state
from pqnsim.chsh import chsh_from_matrix, exact_measurement_matrix, settings_from_user
from pqnsim.compensation import (
    CompensationReport,
    ControllerSetting,
    compensator_unitary,
    objective,
    optimize_compensation,
    solve_for_unitary,
    visibility,
)
from pqnsim.engine import ExperimentEngine
from pqnsim.polarization import (
    AnalyzerSetting,
    apply_local,
    haar_unitary,
    is_unitary,
    make_psi_plus,
    maximally_mixed,
    projection_probability,
    rotation_unitary,
    unitary_distance,
    werner_mix,
)


def test_reference_setting_is_identity_up_to_phase():
    u0 = compensator_unitary(ControllerSetting(0.0, 0.0, 0.0))
    assert is_unitary(u0, tol=1e-12)
    assert unitary_distance(u0, np.eye(2)) < 1e-12
    assert np.allclose(u0 @ u0.conj().T, np.eye(2), atol=1e-12)


def test_stack_is_unitary_for_random_settings(rng):
    for _ in range(50):
        s = ControllerSetting(*rng.uniform(-180, 180, size=3))
        assert is_unitary(compensator_unitary(s), tol=1e-12)


def test_stack_reaches_a_plain_rotation():
    setting, dist = solve_for_unitary(rotation_unitary(37.0))
    assert dist < 1e-6
    assert unitary_distance(compensator_unitary(setting), rotation_unitary(37.0)) < 1e-6


def test_objective_examples():
    assert objective(make_psi_plus()) == pytest.approx(0.0, abs=1e-12)
    assert objective(maximally_mixed()) == pytest.approx(0.5, abs=1e-12)
    rotated = apply_local(
        make_psi_plus(), rotation_unitary(45.0), np.eye(2, dtype=complex)
    )
    assert objective(rotated) == pytest.approx(0.5, abs=1e-12)


def test_objective_invariant_under_global_phase(rng):
    src = SourceConfig(visibility=1.0)
    u = haar_unitary(rng)
    rho_a = apply_local(werner_mix(src.target_state, 1.0), u, np.eye(2, dtype=complex))
    rho_b = apply_local(
        werner_mix(src.target_state, 1.0), np.exp(0.41j) * u, np.eye(2, dtype=complex)
    )
    assert objective(rho_a) == pytest.approx(objective(rho_b), abs=1e-12)


def test_visibility_examples():
    assert visibility(make_psi_plus(), "HV") == pytest.approx(1.0, abs=1e-12)
    assert visibility(make_psi_plus(), "DA") == pytest.approx(1.0, abs=1e-12)
    assert visibility(maximally_mixed(), "HV") == pytest.approx(0.0, abs=1e-12)
    w = werner_mix(make_psi_plus(), 0.884)
    assert visibility(w, "HV") == pytest.approx(0.884, abs=1e-9)
    assert visibility(w, "DA") == pytest.approx(0.884, abs=1e-9)
    with pytest.raises(ValueError):
        visibility(w, "RL")


def test_visibility_against_dense_sweep_oracle(rng):
    # oracle: scan the signal analyzer finely and take the observed extremes
    from conftest import random_density

    for basis, idler_deg in (("HV", 0.0), ("DA", 45.0)):
        for _ in range(10):
            rho = random_density(rng)
            probs = [
                projection_probability(
                    rho, AnalyzerSetting(t), AnalyzerSetting(idler_deg)
                )
                for t in np.arange(-90.0, 90.0, 0.25)
            ]
            hi, lo = max(probs), min(probs)
            oracle = (hi - lo) / (hi + lo) if hi + lo > 0 else 0.0
            assert visibility(rho, basis) == pytest.approx(oracle, abs=1e-4)


def test_identity_channel_needs_no_restarts():
    report = optimize_compensation(
        np.eye(2, dtype=complex), SourceConfig(visibility=1.0), seed=0
    )
    assert report.objective_value < 1e-9
    assert report.restarts_used == 0
    assert report.converged


def test_random_channels_compensate_to_tolerance():
    src = SourceConfig(visibility=1.0)
    rng = np.random.default_rng(515)
    for k in range(20):
        report = optimize_compensation(haar_unitary(rng), src, seed=k)
        assert report.converged
        assert report.objective_value < 1e-6
        assert report.visibility_hv > 0.999
        assert report.visibility_da > 0.999


def test_mixed_state_floor_is_reported():
    src = SourceConfig(visibility=0.884)
    report = optimize_compensation(haar_unitary(np.random.default_rng(6)), src, seed=2)
    floor = (1 - 0.884) / 2
    assert report.mixedness_floor == pytest.approx(floor, abs=1e-12)
    assert report.converged
    assert report.objective_value == pytest.approx(floor, abs=1e-4)
    assert report.visibility_hv == pytest.approx(0.884, abs=1e-3)
    assert report.visibility_da == pytest.approx(0.884, abs=1e-3)


def test_budget_exhaustion_reports_failure_without_raising():
    src = SourceConfig(visibility=1.0)
    report = optimize_compensation(
        haar_unitary(np.random.default_rng(3)), src, budget=40, restarts=1, seed=0
    )
    assert isinstance(report, CompensationReport)
    assert not report.converged
    assert report.iterations <= 40


def test_compensation_restores_chsh_violation():
    engine = ExperimentEngine(seed=31, drift_enabled=True)
    engine.src = SourceConfig(visibility=1.0)
    engine.advance(6 * 3600.0)
    report = engine.compensate()
    assert report.converged
    result, _ = engine.run_session(0.0, 45.0)
    assert abs(result.s_value - 2 * np.sqrt(2)) < 3 * result.sigma_s


def test_recompensation_tracks_drift():
    src = SourceConfig(visibility=1.0)
    ch = FiberChannel(seed=12)
    ch.advance(10 * 3600.0)
    first = optimize_compensation(ch, src, seed=0)
    assert first.converged
    ch.advance(3600.0)
    second = optimize_compensation(ch, src, init=first.setting, seed=0)
    assert second.converged
    # paddle moves measured modulo each retarder's physical period
    # (quarter plates repeat at 180 deg, the half plate at 90 up to phase)
    moves = np.abs(second.setting.as_array() - first.setting.as_array())
    periods = np.array([180.0, 90.0, 180.0])
    moves = np.minimum(moves % periods, periods - moves % periods)
    assert np.max(moves) < 30.0
    # and the realized operator barely changes
    du = unitary_distance(
        compensator_unitary(first.setting), compensator_unitary(second.setting)
    )
    assert du < 0.5
    rho = delivered_state(src, ch, compensator_unitary(second.setting))
    assert objective(rho) < 1e-6


def test_invalid_tolerance_rejected():
    with pytest.raises(ValueError):
        optimize_compensation(np.eye(2, dtype=complex), SourceConfig(), tol=0.0)
