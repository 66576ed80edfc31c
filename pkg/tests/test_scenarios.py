import math

import pytest

from polstab.engine import config_problems, pooled_report, run_scenario
from polstab.scenarios import (
    STATIC_EFFICIENCY,
    STATIC_MODULATOR_ERROR_RMS,
    STATIC_SIDE_NOISE_PROB,
    calibrate_static_budget,
    scenario_keyexchange_phases,
    scenario_scramble_sweep,
    scenario_static,
)


def test_static_preset_values():
    cfg = scenario_static()
    assert cfg.source.mu == 0.1
    assert cfg.side_power_dbm == -7.4
    assert cfg.detector.pbs_extinction_db == 22.0
    assert cfg.detector.dark_count_prob == 1e-5
    assert cfg.source.rep_rate_hz * cfg.duration_s == 1e7
    assert not cfg.control_enabled and cfg.drift_rate == 0 and cfg.scramble_frequency_hz == 0
    assert config_problems(cfg) == []


def test_calibration_constants_are_current():
    eff, side, sigma = calibrate_static_budget()
    assert STATIC_EFFICIENCY == pytest.approx(eff, abs=1e-4)
    assert STATIC_SIDE_NOISE_PROB == pytest.approx(side, rel=1e-3)
    assert STATIC_MODULATOR_ERROR_RMS == pytest.approx(sigma, abs=1e-4)


def test_static_analytic_budget():
    r = pooled_report(run_scenario(scenario_static(mode="analytic")))
    assert r.qber_opt == pytest.approx(0.007, abs=2e-5)
    assert r.qber_det == pytest.approx(0.001, abs=2e-5)
    assert r.qber_side == pytest.approx(0.008, abs=2e-5)


def test_control_adds_about_one_percent():
    # the calibration target for the dither amplitude, averaged over seeds
    deltas = []
    for seed in range(8):
        off = scenario_static(seed=seed, mode="analytic", duration_s=4.0)
        on = off.with_overrides({"control_enabled": True})
        deltas.append(pooled_report(run_scenario(on)).qber_total
                      - pooled_report(run_scenario(off)).qber_total)
    assert sum(deltas) / len(deltas) == pytest.approx(0.011, abs=0.003)


def test_sweep_presets():
    cfgs = scenario_scramble_sweep()
    assert max(c.scramble_frequency_hz for c in cfgs) >= 10.0
    assert any(c.scramble_frequency_hz * 4 * math.pi == pytest.approx(40 * math.pi) for c in cfgs)
    for c in cfgs:
        assert c.source.mu == 1.0 and c.source.fixed_state is not None
        assert c.duration_s * c.source.rep_rate_hz == 50 * c.pulses_per_point == 5e7
        assert c.control_enabled and config_problems(c) == []
    assert len({c.seed for c in cfgs}) == len(cfgs)


def test_zero_frequency_sweep_entry_is_static_bright_probe():
    (c,) = scenario_scramble_sweep([0.0], points=2)
    assert c.scramble_frequency_hz == 0 and c.drift_rate == 0 and c.source.mu == 1.0


def test_keyexchange_preset():
    cfg = scenario_keyexchange_phases()
    names = [p.name for p in cfg.phase_schedule]
    assert names == ["a", "b", "c", "d"]
    ov = {p.name: p.overrides for p in cfg.phase_schedule}
    assert ov["c"]["control_enabled"] is False and ov["c"]["drift_rate"] > 0
    assert ov["d"]["control_enabled"] is True
    assert ov["a"]["drift_rate"] == 0
    assert cfg.source.mu == 0.1 and cfg.pulses_per_point == 1_000_000
    assert config_problems(cfg) == []
