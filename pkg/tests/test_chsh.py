import numpy as np
import pytest

from pqnsim.channel import CountRecord
from pqnsim.chsh import (
    PORT_COMBOS,
    ChshResult,
    InsufficientDataError,
    MatrixStructureError,
    MeasurementMatrix,
    chsh_from_matrix,
    chsh_ideal,
    correlation_from_counts,
    exact_measurement_matrix,
    mirrored_setting,
    settings_from_user,
)
from pqnsim.polarization import (
    AnalyzerSetting,
    linear_ket,
    make_psi_plus,
    werner_mix,
)


def brute_force_chsh(v: float, a: float, a_prime: float) -> float:
    """Independent oracle: |S| assembled from scratch with explicit kets.

    Uses nothing from the module under test except the angle conventions
    it documents: idler offset +22.5 deg, signal projector mirrored.
    """
    rho = v * make_psi_plus() + (1 - v) * np.eye(4) / 4
    b, b_prime = a + 22.5, a_prime + 22.5

    def prob(sig_deg, idl_deg):
        k = np.kron(linear_ket(-sig_deg), linear_ket(idl_deg))
        return float((k.conj() @ rho @ k).real)

    def corr(x, y):
        return (
            prob(x, y)
            - prob(x, y + 90)
            - prob(x + 90, y)
            + prob(x + 90, y + 90)
        )

    return abs(corr(a, b) - corr(a, b_prime) + corr(a_prime, b) + corr(a_prime, b_prime))


def test_settings_from_user_examples():
    s = settings_from_user(0.0, 10.0)
    assert (s.b, s.b_prime) == (22.5, 32.5)
    s = settings_from_user(0.0, 0.0)
    assert s.b == s.b_prime == 22.5
    assert s.delta == 0.0
    assert settings_from_user(10.0, 55.0).delta == 45.0


def test_settings_canonicalization_invariance():
    s1 = settings_from_user(10.0, 40.0)
    s2 = settings_from_user(190.0, 220.0)
    assert s1 == s2


def test_correlation_from_counts_examples():
    e, sig = correlation_from_counts(500, 0, 0, 500)
    assert (e, sig) == (1.0, 0.0)
    e, sig = correlation_from_counts(250, 250, 250, 250)
    assert e == 0.0
    assert sig == pytest.approx(1 / np.sqrt(1000), abs=1e-12)
    e, sig = correlation_from_counts(100, 50, 50, 100)
    assert e == pytest.approx(1 / 3, abs=1e-4)
    assert sig == pytest.approx(0.0544, abs=2e-4)


def test_correlation_sigma_against_resampling_oracle():
    # Monte-Carlo oracle: resample Poisson counts around the observed rates
    # and compare the spread of E to the propagated formula
    counts = (100.0, 50.0, 50.0, 100.0)
    _, sigma = correlation_from_counts(*counts)
    rng = np.random.default_rng(8)
    replays = []
    for _ in range(20000):
        n = rng.poisson(counts)
        if n.sum() == 0:
            continue
        replays.append((n[0] + n[3] - n[1] - n[2]) / n.sum())
    assert np.std(replays) == pytest.approx(sigma, rel=0.05)


def test_correlation_requires_counts():
    with pytest.raises(InsufficientDataError):
        correlation_from_counts(0, 0, 0, 0)
    with pytest.raises(ValueError):
        correlation_from_counts(-1, 2, 3, 4)


def test_chsh_from_exact_matrix_key_points():
    m = exact_measurement_matrix(1.0, settings_from_user(0.0, 45.0))
    assert chsh_from_matrix(m).s_value == pytest.approx(2 * np.sqrt(2), abs=1e-6)
    m = exact_measurement_matrix(1.0, settings_from_user(0.0, 0.0))
    assert chsh_from_matrix(m).s_value == pytest.approx(np.sqrt(2), abs=1e-6)


def test_chsh_uniform_counts_give_zero():
    settings = settings_from_user(0.0, 30.0)
    records = []
    for sig, idl in settings.angle_pairs():
        for sp, ip in PORT_COMBOS:
            records.append(
                CountRecord(
                    AnalyzerSetting(sig, sp), AnalyzerSetting(idl, ip),
                    10.0, 250, 0, 0, 0.0,
                )
            )
    result = chsh_from_matrix(MeasurementMatrix(settings, tuple(records)))
    assert result.s_value == 0.0


def test_chsh_ideal_against_brute_force_oracle():
    # weights and angles chosen to cover the whole parameter range
    assert chsh_ideal(1.0, 45.0) == pytest.approx(2 * np.sqrt(2), abs=1e-12)
    assert chsh_ideal(1.0, 0.0) == pytest.approx(np.sqrt(2), abs=1e-12)
    assert chsh_ideal(0.884, 45.0) == pytest.approx(2.50, abs=5e-3)
    rng = np.random.default_rng(4)
    for _ in range(50):
        v = rng.uniform(0, 1)
        a = rng.uniform(-90, 90)
        delta = rng.uniform(0, 90)
        assert chsh_ideal(v, delta) == pytest.approx(
            brute_force_chsh(v, a, a + delta), abs=1e-10
        )


def test_noiseless_matrix_matches_ideal_over_grid():
    for v in np.linspace(0.0, 1.0, 5):
        for delta in np.linspace(0.0, 90.0, 10):
            m = exact_measurement_matrix(v, settings_from_user(12.0, 12.0 + delta))
            got = chsh_from_matrix(m).s_value
            assert got == pytest.approx(chsh_ideal(v, delta), abs=1e-6)


def test_noiseless_curve_symmetric_about_peak():
    # evaluate the exact-matrix oracle on a mirrored grid around 45 degrees
    for v in (0.4, 0.884, 1.0):
        for x in np.linspace(0.0, 45.0, 10):
            lo = chsh_from_matrix(
                exact_measurement_matrix(v, settings_from_user(0.0, 45.0 - x))
            ).s_value
            hi = chsh_from_matrix(
                exact_measurement_matrix(v, settings_from_user(0.0, 45.0 + x))
            ).s_value
            assert lo == pytest.approx(hi, abs=1e-9)


def test_noiseless_violation_threshold():
    # sqrt(2) v (1 + sin 2d) = 2 at d ~ 18.42 degrees for v = 0.884
    threshold = np.rad2deg(np.arcsin(np.sqrt(2) / 0.884 - 1)) / 2
    assert threshold == pytest.approx(18.4, abs=0.1)
    assert chsh_ideal(0.884, threshold - 0.1) < 2.0
    assert chsh_ideal(0.884, threshold + 0.1) > 2.0
    assert all(
        chsh_ideal(0.884, d) > 2.0 for d in np.linspace(threshold + 0.2, 45.0, 20)
    )


def test_noiseless_s_respects_scaled_tsirelson_bound():
    rng = np.random.default_rng(11)
    for _ in range(100):
        v = rng.uniform(0, 1)
        delta = rng.uniform(-90, 90)
        m = exact_measurement_matrix(v, settings_from_user(0.0, delta))
        assert chsh_from_matrix(m).s_value <= 2 * np.sqrt(2) * v + 1e-9


def test_sigma_s_against_monte_carlo_replays():
    # propagated sigma_S tracks the spread of replayed sessions within 10%
    # whenever every expected count is at least 50
    settings = settings_from_user(0.0, 20.0)
    base = exact_measurement_matrix(0.8, settings, scale=4000.0)
    expected = [r.coincidences for r in base.records]
    assert min(expected) >= 50
    rng = np.random.default_rng(123)
    s_values = []
    sigma_reported = None
    for _ in range(500):
        records = []
        for rec in base.records:
            records.append(
                CountRecord(
                    rec.signal_setting, rec.idler_setting, rec.duration_s,
                    int(rng.poisson(rec.coincidences)), 0, 0, rec.wall_time,
                )
            )
        res = chsh_from_matrix(MeasurementMatrix(settings, tuple(records)))
        s_values.append(res.s_value)
        sigma_reported = res.sigma_s
    assert np.std(s_values) == pytest.approx(sigma_reported, rel=0.10)


def test_matrix_structure_validation():
    settings = settings_from_user(0.0, 45.0)
    good = exact_measurement_matrix(1.0, settings)
    with pytest.raises(MatrixStructureError):
        MeasurementMatrix(settings, good.records[:15])
    # swap one record's analyzer angle: no longer matches its slot
    bad = list(good.records)
    rec = bad[3]
    bad[3] = CountRecord(
        AnalyzerSetting(rec.signal_setting.angle_deg + 13.0, rec.signal_setting.port),
        rec.idler_setting, rec.duration_s, rec.coincidences, 0, 0, 0.0,
    )
    with pytest.raises(MatrixStructureError):
        MeasurementMatrix(settings, tuple(bad))


def test_matrix_accepts_port_as_angle_offset():
    # a +90 deg analyzer offset with a transmitted port is the same projector
    settings = settings_from_user(5.0, 50.0)
    records = []
    for sig, idl in settings.angle_pairs():
        for sp, ip in PORT_COMBOS:
            records.append(
                CountRecord(
                    AnalyzerSetting(sig + (90.0 if sp == "reflected" else 0.0)),
                    AnalyzerSetting(idl + (90.0 if ip == "reflected" else 0.0)),
                    10.0, 5, 0, 0, 0.0,
                )
            )
    MeasurementMatrix(settings, tuple(records))  # validates cleanly


def test_mirrored_setting():
    s = mirrored_setting(30.0)
    assert s.angle_deg == -30.0
    assert s.port == "transmitted"


def test_result_validation_bounds():
    settings = settings_from_user(0, 45)
    with pytest.raises(ValueError):
        ChshResult(5.0, 0.1, ((0, 0),) * 4, settings, True, 0.0)
    with pytest.raises(ValueError):
        ChshResult(1.0, 0.1, ((1.5, 0),) * 4, settings, True, 0.0)


def test_result_round_trips_through_dict():
    m = exact_measurement_matrix(0.9, settings_from_user(3.0, 40.0), scale=100.0)
    res = chsh_from_matrix(m, live=False, wall_time=77.0)
    assert ChshResult.from_dict(res.to_dict()) == res
