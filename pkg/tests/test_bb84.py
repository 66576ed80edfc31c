import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polstab.bb84 import (
    ALPHABET,
    Cause,
    DetectorConfig,
    OutcomeBlock,
    PulseOutcome,
    QberReport,
    SourceConfig,
    detect_pulse,
    expected_counts,
    expected_qber_opt,
    expected_report,
    leakage_from_extinction,
    read_detection_log,
    run_static_pulses,
    sift_and_score,
    transmit_block,
    transmit_pulse,
    write_detection_log,
)
from polstab.errors import UndefinedRateError, ValidationError
from polstab.polarization import (
    H,
    R,
    JonesVector,
    PolUnitary,
    fidelity,
    random_unitary,
    rotation_about,
)

EPS22 = 10 ** -2.2


# --- source ----------------------------------------------------------------

def test_alphabet_is_two_unbiased_bases():
    assert SourceConfig().problems() == []
    for a in (0, 1):
        for b in (2, 3):
            assert fidelity(ALPHABET[a], ALPHABET[b]) == pytest.approx(0.5, abs=1e-12)
    bad = SourceConfig(alphabet=(ALPHABET[0], ALPHABET[1], ALPHABET[0], ALPHABET[1]))
    assert bad.problems()


def test_source_validation():
    assert SourceConfig(mu=0.0).problems()
    assert SourceConfig(fixed_state=7).problems()


def test_nonvacuum_probability(rng):
    counts, *_ = transmit_block(SourceConfig(mu=0.1), 400_000, rng)
    p = np.mean(counts >= 1)
    assert 1 - math.exp(-0.1) == pytest.approx(0.0952, abs=1e-4)
    assert p == pytest.approx(1 - math.exp(-0.1), abs=4 * math.sqrt(0.0952 * 0.9048 / 400_000))


def test_zero_mu_is_vacuum(rng):
    # mu = 0 fails validation for a session but the Poisson draw is still defined
    counts, *_ = transmit_block(SourceConfig(mu=0.0), 1000, rng)
    assert not counts.any()


def test_prepared_state_exact_without_modulator_error(rng):
    for _ in range(20):
        t = transmit_pulse(SourceConfig(), rng)
        assert t.prepared == ALPHABET[2 * t.alice_basis + t.alice_bit]


def test_modulator_error_tilt_statistics(rng):
    sigma = 0.1
    _, stokes, bits, bases = transmit_block(SourceConfig(modulator_error_rms=sigma), 100_000, rng)
    ideal = SourceConfig().alphabet_stokes()[2 * bases + bits]
    ang = np.arccos(np.clip(np.sum(stokes * ideal, axis=1), -1, 1))
    assert np.mean(ang ** 2) == pytest.approx(sigma ** 2, rel=0.03)
    assert np.allclose(np.linalg.norm(stokes, axis=1), 1.0)


# --- receiver ----------------------------------------------------------------

def test_leakage_value():
    assert leakage_from_extinction(EPS22) == pytest.approx(0.0063, abs=5e-5)
    assert DetectorConfig().leakage == pytest.approx(EPS22 / (1 + EPS22))


def test_no_photon_no_noise_is_none(rng):
    det = DetectorConfig(dark_count_prob=0.0, side_noise_prob=0.0)
    for _ in range(50):
        out = detect_pulse(0, JonesVector(1, 0), 0, det, 1.0, rng)
        assert out.cause == Cause.NONE and not out.click0 and not out.click1


def test_orthogonal_state_always_wrong_port(rng):
    det = DetectorConfig(efficiency=1.0, dark_count_prob=0.0, pbs_extinction_db=300.0)
    for _ in range(50):
        out = detect_pulse(3, JonesVector(0, 1), 0, det, 1.0, rng)
        assert out.click1 and not out.click0 and out.bob_bit == 1 and out.cause == Cause.SIGNAL


def test_transmission_precondition(rng):
    with pytest.raises(ValidationError):
        detect_pulse(1, JonesVector(1, 0), 0, DetectorConfig(), 0.0, rng)


def test_wrong_port_probability_at_alignment(rng):
    det = DetectorConfig(efficiency=1.0, dark_count_prob=0.0, pbs_extinction_db=22.0)
    block = run_static_pulses(SourceConfig(mu=0.05), det, 1.0, PolUnitary.identity(), 1_000_000, rng)
    r = sift_and_score(block)
    se = math.sqrt(0.0063 / r.sifted)
    assert r.qber_opt == pytest.approx(EPS22 / (1 + EPS22), abs=4 * se + 4e-4)


# --- sifting and scoring -------------------------------------------------------

def _outcome(alice_bit, alice_basis, bob_basis, bob_bit, cause):
    return PulseOutcome(alice_bit, alice_basis, bob_basis, bob_bit == 0, bob_bit == 1, cause, bob_bit)


def test_all_correct_stream():
    outs = [_outcome(b, 0, 0, b, Cause.SIGNAL) for b in (0, 1, 1, 0)]
    r = sift_and_score(outs)
    assert r.qber_total == 0.0 and r.sifted_count == 4 and r.sent_count == 4


def test_labelled_decomposition_exact():
    outs = ([_outcome(0, 0, 0, 0, Cause.SIGNAL)] * 90 + [_outcome(0, 0, 0, 1, Cause.SIGNAL)] * 5
            + [_outcome(1, 1, 1, 0, Cause.DARK)] * 2 + [_outcome(1, 1, 1, 0, Cause.SIDE)] * 3
            + [_outcome(1, 1, 0, 0, Cause.SIGNAL)] * 50 + [_outcome(0, 0, 0, -1, Cause.NONE)] * 7)
    r = sift_and_score(outs)
    assert r.sifted_count == 100
    assert (r.qber_opt, r.qber_det, r.qber_side) == (0.05, 0.02, 0.03)
    assert r.qber_total == r.qber_opt + r.qber_det + r.qber_side


def test_empty_or_unsifted_stream():
    with pytest.raises(ValidationError):
        sift_and_score([])
    with pytest.raises(UndefinedRateError):
        sift_and_score([_outcome(0, 0, 1, 0, Cause.SIGNAL)])
    with pytest.raises(UndefinedRateError):
        _ = QberReport().qber_total


def test_report_merge_is_associative():
    a = QberReport(10, 1, 0, 1, 100)
    b = QberReport(20, 2, 1, 0, 200)
    c = QberReport(5, 0, 0, 1, 50)
    assert (a + b) + c == a + (b + c)


@given(st.integers(0, 2 ** 32 - 1))
def test_decomposition_sums_to_total(seed):
    rng = np.random.default_rng(seed)
    det = DetectorConfig(efficiency=0.5, dark_count_prob=1e-3, side_noise_prob=2e-3)
    block = run_static_pulses(SourceConfig(mu=0.2), det, 0.5, random_unitary(rng), 20_000, rng)
    r = sift_and_score(block)
    assert r.errors == r.errors_opt + r.errors_det + r.errors_side
    assert 0.0 <= r.qber_total <= 1.0


def test_sifting_keeps_half(rng):
    det = DetectorConfig(efficiency=1.0, dark_count_prob=0.0)
    block = run_static_pulses(SourceConfig(mu=0.1), det, 1.0, PolUnitary.identity(), 400_000, rng)
    clicks = np.sum(block.click0 | block.click1)
    frac = sift_and_score(block).sifted_count / clicks
    assert frac == pytest.approx(0.5, abs=4 * math.sqrt(0.25 / clicks))


def test_double_clicks_resolved_by_coin(rng):
    det = DetectorConfig(efficiency=1.0, dark_count_prob=1.0)
    out = [detect_pulse(0, JonesVector(1, 0), 0, det, 1.0, rng) for _ in range(2000)]
    assert all(o.click0 and o.click1 and o.cause == Cause.DARK for o in out)
    assert np.mean([o.bob_bit for o in out]) == pytest.approx(0.5, abs=0.05)


def test_doubling_dark_counts(rng):
    src = SourceConfig(mu=0.1)
    t = 0.141
    r1 = expected_report(PolUnitary.identity(), src, DetectorConfig(dark_count_prob=1e-5), t, 1e9)
    r2 = expected_report(PolUnitary.identity(), src, DetectorConfig(dark_count_prob=2e-5), t, 1e9)
    assert r2.errors_det / r1.errors_det == pytest.approx(2.0, rel=1e-3)
    assert r2.errors_opt == pytest.approx(r1.errors_opt, rel=1e-3)
    det1, det2 = DetectorConfig(efficiency=0.7, dark_count_prob=1e-3), DetectorConfig(efficiency=0.7, dark_count_prob=2e-3)
    m1 = sift_and_score(run_static_pulses(src, det1, t, PolUnitary.identity(), 2_000_000, rng))
    m2 = sift_and_score(run_static_pulses(src, det2, t, PolUnitary.identity(), 2_000_000, rng))
    ratio_se = 2 * math.sqrt(1 / m1.errors_det + 1 / m2.errors_det)
    assert m2.errors_det / m1.errors_det == pytest.approx(2.0, abs=3 * ratio_se)


# --- detection log -------------------------------------------------------------

def test_detection_log_round_trip(tmp_path, rng):
    det = DetectorConfig(efficiency=1.0, dark_count_prob=1e-3)
    block = run_static_pulses(SourceConfig(mu=0.1), det, 1.0, PolUnitary.identity(), 5000, rng)
    path = tmp_path / "log.csv"
    n = write_detection_log(path, block, first_pulse=100)
    rows = read_detection_log(path)
    assert len(rows) == n == sift_and_score(block).sifted_count
    assert list(rows[0]) == ["pulse_index", "alice_basis", "alice_bit", "bob_basis", "bob_bit", "cause"]
    assert all(int(r["pulse_index"]) >= 100 and r["alice_basis"] == r["bob_basis"] for r in rows)


# --- analytic oracle -----------------------------------------------------------

def test_expected_qber_opt_examples():
    assert expected_qber_opt(PolUnitary.identity(), epsilon=0.0) == pytest.approx(0.0, abs=1e-15)
    assert expected_qber_opt(PolUnitary.identity(), epsilon=EPS22) == pytest.approx(0.0063, abs=5e-5)
    # a quarter turn about the circular axis moves every alphabet state 90 degrees
    lam = EPS22 / (1 + EPS22)
    u = rotation_about(R, math.pi / 2)
    assert expected_qber_opt(u, epsilon=EPS22) == pytest.approx(0.5 * (1 - 2 * lam) + lam, abs=1e-12)


def test_expected_counts_single_photon_limit(rng):
    det = DetectorConfig(efficiency=1e-4, dark_count_prob=0.0)
    for _ in range(20):
        u = random_unitary(rng)
        e = expected_counts(u.quaternion, SourceConfig(), det, 1.0)
        assert e[1] / e[0] == pytest.approx(expected_qber_opt(u, epsilon=10 ** -2.2), abs=1e-5)


@pytest.mark.slow
def test_monte_carlo_matches_expected_qber_opt():
    rng = np.random.default_rng(7)
    src = SourceConfig(mu=0.1)
    det = DetectorConfig(efficiency=0.1, dark_count_prob=0.0)
    z = []
    for _ in range(100):
        u = random_unitary(rng)
        r = sift_and_score(run_static_pulses(src, det, 1.0, u, 1_000_000, rng))
        p = expected_qber_opt(u, epsilon=10 ** -2.2)
        se = math.sqrt(max(p * (1 - p), 1e-6) / r.sifted_count)
        z.append((r.qber_opt - p) / se)
    assert np.max(np.abs(z)) < 4.0   # 100 comparisons
    assert np.mean(np.abs(z) < 3.0) >= 0.97


def test_monte_carlo_matches_expected_counts_with_noise(rng):
    src = SourceConfig(mu=0.5, modulator_error_rms=0.05)
    det = DetectorConfig(efficiency=0.5, dark_count_prob=1e-3, side_noise_prob=2e-3)
    u = random_unitary(rng)
    n = 1_000_000
    mc = sift_and_score(run_static_pulses(src, det, 0.3, u, n, rng))
    ex = expected_report(u, src, det, 0.3, n)
    for name in ("qber_total", "qber_opt", "qber_det", "qber_side"):
        p = getattr(ex, name)
        assert getattr(mc, name) == pytest.approx(p, abs=3.5 * math.sqrt(p * (1 - p) / mc.sifted) + 1e-4)
    assert mc.sifted == pytest.approx(ex.sifted, rel=0.02)
