import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polstab import quat
from polstab.errors import ExtrapolationError, ValidationError
from polstab.fiber import (
    CHANNEL_SPACING_RAD_S,
    MEAN_DGD_S,
    ChannelBudget,
    RamanTable,
    ScramblerState,
    advance_fiber,
    channel_transmission,
    dark_slot_duty_cycle,
    load_raman_table,
    make_fiber_state,
    raman_noise_probability,
    scrambler_angles,
    scrambler_quaternions,
    scrambler_rotation_rate,
    scrambler_unitary,
    step_fiber,
    unitary_at_wavelength,
)
from polstab.polarization import H, PolUnitary, fidelity, JonesVector


# --- drift and PMD ---------------------------------------------------------

def test_zero_drift_keeps_u_ref():
    st_ = make_fiber_state(3)
    q0 = st_.q.copy()
    for _ in range(50):
        step_fiber(st_, 1e-3)
    assert np.array_equal(st_.q, q0)


def test_drift_rate_is_mean_probe_displacement():
    rate, dt = 2.0, 1e-3
    st_ = make_fiber_state(5, drift_rate=rate)
    qs, _ = advance_fiber(st_, dt, 10_000)
    probe = np.array([0.6, 0.0, 0.8])
    s = quat.rotate(qs, probe)
    step = np.arccos(np.clip(np.sum(s[1:] * s[:-1], axis=-1), -1, 1))
    assert np.mean(step) / dt == pytest.approx(rate, rel=0.2)


def test_pmd_mean_magnitude():
    st_ = make_fiber_state(7, pmd_correlation_s=1.0)
    _, pmd = advance_fiber(st_, 1e-3, 1_000_000)
    assert np.mean(np.linalg.norm(pmd, axis=1)) == pytest.approx(MEAN_DGD_S, rel=0.1)


def test_same_seed_bit_reproducible():
    a, b = make_fiber_state(11, drift_rate=3.0), make_fiber_state(11, drift_rate=3.0)
    qa, pa = advance_fiber(a, 1e-4, 500)
    qb, pb = advance_fiber(b, 1e-4, 500)
    assert np.array_equal(qa, qb) and np.array_equal(pa, pb)


def test_stays_special_unitary_over_long_runs():
    st_ = make_fiber_state(13, drift_rate=50.0)
    scr = ScramblerState(ramp_frequency=7.0, enabled=True)
    n, dt = 1_000_000, 1e-5
    qs, _ = advance_fiber(st_, dt, n)
    total = quat.qmul(qs, scrambler_quaternions(scr, np.arange(n) * dt))
    assert np.max(np.abs(np.linalg.norm(total, axis=1) - 1.0)) < 1e-9


def test_step_requires_positive_dt():
    with pytest.raises(ValidationError):
        step_fiber(make_fiber_state(0), 0.0)


# --- wavelength dependence -------------------------------------------------

def test_unitary_at_wavelength_examples():
    st_ = make_fiber_state(1)
    assert unitary_at_wavelength(st_, 0.0).unitary.equals(st_.u_ref)
    st_.pmd = np.array([0.0, 0.0, 0.28e-12])
    w = unitary_at_wavelength(st_, CHANNEL_SPACING_RAD_S)
    rel = w.unitary @ st_.u_ref.inverse()
    assert rel.angle == pytest.approx(0.28e-12 * 2 * math.pi * 1e11, rel=1e-12)
    assert rel.angle == pytest.approx(0.176, abs=5e-4)
    assert w.first_order
    st_.pmd = np.zeros(3)
    assert unitary_at_wavelength(st_, 1e12).unitary.equals(st_.u_ref)


def test_first_order_flag():
    st_ = make_fiber_state(2)
    st_.pmd = np.array([1e-11, 0.0, 0.0])
    assert not unitary_at_wavelength(st_, 1e12).first_order


def _probe_decorrelation(dw, rng, n=1000):
    total = 0.0
    for i in range(n):
        st_ = make_fiber_state(rng)
        j = JonesVector.from_stokes(H)
        u_p = unitary_at_wavelength(st_, dw).unitary
        u_m = unitary_at_wavelength(st_, -dw).unitary
        total += 1.0 - fidelity(u_p.apply(j), u_m.apply(j))
    return total / n


def test_decorrelation_is_quadratic(rng):
    full = _probe_decorrelation(CHANNEL_SPACING_RAD_S, np.random.default_rng(1))
    half = _probe_decorrelation(CHANNEL_SPACING_RAD_S / 2, np.random.default_rng(1))
    assert 3.0 <= full / half <= 5.0


# --- scrambler -------------------------------------------------------------

def test_scrambler_disabled_and_zero_phase():
    assert scrambler_unitary(ScramblerState(ramp_frequency=3.0), 0.4).equals(PolUnitary.identity())
    s = ScramblerState(ramp_frequency=1.0, phases=(0.0, 0.0, 0.0), enabled=True)
    assert scrambler_unitary(s, 0.0).equals(PolUnitary.identity())


def test_scrambler_rate_convention():
    s = ScramblerState(ramp_frequency=1.0, enabled=True)
    assert scrambler_rotation_rate(s) == pytest.approx(4 * math.pi)
    # numerical check: summed |d theta / dt| over the three actuators
    t = np.linspace(0.01, 2.99, 3001)
    th = scrambler_angles(s, t)
    rate = np.sum(np.abs(np.diff(th, axis=0)), axis=1) / np.diff(t)
    assert np.median(rate) == pytest.approx(4 * math.pi, rel=1e-6)


@given(st.floats(0.1, 20.0), st.floats(0.0, 5.0))
def test_triangle_spans_two_pi(f, t):
    s = ScramblerState(ramp_frequency=f, enabled=True)
    th = scrambler_angles(s, np.linspace(t, t + s.period, 2001))
    assert np.all(th >= -1e-12) and np.all(th <= 2 * math.pi + 1e-12)
    assert th.max() - th.min() == pytest.approx(2 * math.pi, abs=0.02)


@given(st.floats(0.1, 20.0), st.floats(0.0, 10.0))
def test_scrambler_periodic(f, t):
    s = ScramblerState(ramp_frequency=f, enabled=True)
    a = scrambler_unitary(s, t)
    b = scrambler_unitary(s, t + s.period)
    assert a.equals(b, 1e-8)


def test_scrambler_rejects_negative_time():
    with pytest.raises(ValidationError):
        scrambler_unitary(ScramblerState(), -1.0)


# --- budget ------------------------------------------------------------------

def test_channel_transmission_examples():
    fiber_only = ChannelBudget(4.3, 0.0, 0.0, 0.0)
    assert channel_transmission(fiber_only) == pytest.approx(10 ** -0.43)
    assert round(channel_transmission(fiber_only), 3) == 0.372
    assert channel_transmission(ChannelBudget(0, 0, 0, 0)) == 1.0
    assert channel_transmission(ChannelBudget()) == pytest.approx(10 ** -0.85)
    assert channel_transmission(ChannelBudget()) == pytest.approx(0.141, abs=5e-4)
    with pytest.raises(ValidationError):
        channel_transmission(ChannelBudget(fiber_loss_db=-1.0))


def test_dark_slot_duty_cycle():
    assert dark_slot_duty_cycle(13.5, 5e6) == pytest.approx(0.9325, abs=1e-12)
    assert dark_slot_duty_cycle(0.0, 5e6) == 1.0
    with pytest.raises(ValidationError):
        dark_slot_duty_cycle(200.0, 5e6)


# --- Raman -------------------------------------------------------------------

def test_raman_examples():
    assert raman_noise_probability(0.8, 0.0, 1.0) == 0.0
    one = raman_noise_probability(0.8, 1.0, 1.0)
    assert raman_noise_probability(0.8, 1.0, 2.0) == pytest.approx(2 * one)
    assert raman_noise_probability(0.8, 2.0, 1.0) == pytest.approx(2 * one)
    for dl in (-0.8, 0.8):
        assert raman_noise_probability(dl, 1.0, 1.0) > 1e-5


def test_raman_extrapolation():
    for dl in (-50.0, 0.0, 50.0):
        with pytest.raises(ExtrapolationError):
            raman_noise_probability(dl, 1.0, 1.0)


def test_raman_table_file(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("# custom\n-1.0, 2e-5\n-0.5 4e-5\n0.5, 3e-5\n1.0, 1e-5\n")
    t = load_raman_table(p)
    assert t.lookup(-0.5) == pytest.approx(4e-5)
    assert t.lookup(0.75) == pytest.approx(math.sqrt(3e-5 * 1e-5))  # log-linear
    p.write_text("1.0\n")
    with pytest.raises(ValidationError):
        load_raman_table(p)
    with pytest.raises(ValidationError):
        RamanTable(np.array([1.0, 0.5]), np.array([1e-5, 1e-5]))
