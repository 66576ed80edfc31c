"""Preset scenarios.

``scenario_static``
    Aligned, undisturbed link with the loop off.  Used to reproduce the
    static error budget (1.6 % split 0.7 / 0.1 / 0.8 % into optical,
    detector and side-channel shares).
``scenario_scramble_sweep``
    Piezo scrambler at increasing frequency with the loop on; bright
    (``mu = 1``) fixed-state probe, so only ``qber_opt`` matters.
``scenario_keyexchange_phases``
    Four labelled phases: stabilised, stabilised under random scrambling,
    unstabilised under scrambling, stabilisation switched back on.
"""

from __future__ import annotations

import math
from dataclasses import replace

from .bb84 import DetectorConfig, SourceConfig, expected_counts
from .engine import Phase, ScenarioConfig
from .fiber import ChannelBudget, channel_transmission
from .quat import IDENTITY

# Calibration constants of the static budget, solved by
# ``calibrate_static_budget`` for the default budget, mu = 0.1, 22 dB PBS
# and 1e-5 dark counts.  ``tests/test_scenarios.py`` re-derives them.
STATIC_EFFICIENCY = 0.6952
STATIC_SIDE_NOISE_PROB = 8.0e-5
STATIC_MODULATOR_ERROR_RMS = 0.0590

STATIC_TARGETS = {"qber_opt": 0.007, "qber_det": 0.001, "qber_side": 0.008}

SWEEP_FREQUENCIES_HZ = (1.0, 2.0, 4.0, 10.0, 16.0, 32.0, 48.0, 64.0)
SWEEP_POINTS = 50
PHASE_DURATION_S = 60.0
#: random scrambling applied by hand during the key-exchange phases (rad/s)
MANUAL_SCRAMBLE_RATE = 2.0 * math.pi


def _static_shares(efficiency, side, sigma, src, det, budget):
    det = replace(det, efficiency=efficiency, side_noise_prob=side)
    src = replace(src, modulator_error_rms=sigma)
    s, e_opt, e_det, e_side = expected_counts(IDENTITY, src, det, channel_transmission(budget))
    return e_opt / s, e_det / s, e_side / s


def _bisect(fn, lo, hi, target, increasing, iters=80):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if (fn(mid) < target) == increasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_static_budget(targets=None, src: SourceConfig | None = None,
                            det: DetectorConfig | None = None, budget: ChannelBudget | None = None):
    """Solve ``(efficiency, side_noise_prob, modulator_error_rms)`` so the
    aligned link reproduces ``targets`` (expected shares, identity residual).

    The three shares are coupled only through the sifted count, so a few
    rounds of one-dimensional bisection converge.
    """
    t = dict(STATIC_TARGETS if targets is None else targets)
    src = SourceConfig() if src is None else src
    det = DetectorConfig() if det is None else det
    budget = ChannelBudget() if budget is None else budget
    eff, side, sigma = 0.5, 1e-4, 0.05
    for _ in range(20):
        # more efficiency, more signal: the dark-count share falls
        eff = _bisect(lambda x: _static_shares(x, side, sigma, src, det, budget)[1],
                      1e-6, 1.0, t["qber_det"], increasing=False)
        side = _bisect(lambda x: _static_shares(eff, x, sigma, src, det, budget)[2],
                       0.0, 0.1, t["qber_side"], increasing=True)
        sigma = _bisect(lambda x: _static_shares(eff, side, x, src, det, budget)[0],
                        0.0, 1.5, t["qber_opt"], increasing=True)
    return eff, side, sigma


def scenario_static(seed: int = 0, mode: str = "montecarlo", duration_s: float = 2.0) -> ScenarioConfig:
    """Static budget: 2 s at 5 MHz is 1e7 pulses."""
    return ScenarioConfig(
        name="static",
        duration_s=duration_s,
        mode=mode,
        seed=seed,
        control_enabled=False,
        source=SourceConfig(mu=0.1, modulator_error_rms=STATIC_MODULATOR_ERROR_RMS),
        detector=DetectorConfig(efficiency=STATIC_EFFICIENCY, dark_count_prob=1e-5,
                                pbs_extinction_db=22.0, side_noise_prob=STATIC_SIDE_NOISE_PROB),
    )


def scenario_scramble_sweep(frequencies=None, seed: int = 0, points: int = SWEEP_POINTS,
                            mode: str = "analytic") -> list:
    """One scenario per scrambling frequency, ``points`` reporting
    intervals of 1e6 pulses each."""
    from .engine import derive_seed

    freqs = SWEEP_FREQUENCIES_HZ if frequencies is None else tuple(frequencies)
    base = ScenarioConfig(
        name="scramble_sweep",
        mode=mode,
        control_enabled=True,
        source=SourceConfig(mu=1.0, fixed_state=0),
        detector=DetectorConfig(efficiency=STATIC_EFFICIENCY, dark_count_prob=1e-5,
                                pbs_extinction_db=22.0),
    )
    interval = base.pulses_per_point / base.source.rep_rate_hz
    return [
        replace(base, name=f"scramble_sweep_{f:g}Hz", scramble_frequency_hz=float(f),
                duration_s=points * interval, seed=derive_seed(seed, i))
        for i, f in enumerate(freqs)
    ]


def scenario_keyexchange_phases(seed: int = 0, phase_duration_s: float = PHASE_DURATION_S,
                                mode: str = "analytic",
                                scramble_rate: float = MANUAL_SCRAMBLE_RATE) -> ScenarioConfig:
    """Phases a-d: control on and quiet, control on and scrambled, control
    off and scrambled, control back on and scrambled."""
    static = scenario_static(seed=seed, mode=mode)
    scrambled = {"drift_rate": scramble_rate}
    schedule = (
        Phase("a", phase_duration_s, {"control_enabled": True, "drift_rate": 0.0}),
        Phase("b", phase_duration_s, {"control_enabled": True, **scrambled}),
        Phase("c", phase_duration_s, {"control_enabled": False, **scrambled}),
        Phase("d", phase_duration_s, {"control_enabled": True, **scrambled}),
    )
    return replace(static, name="keyexchange_phases", duration_s=4 * phase_duration_s,
                   phase_schedule=schedule, drift_correlation_s=0.2)


PRESETS = {
    "static": scenario_static,
    "keyexchange_phases": scenario_keyexchange_phases,
}
SWEEPS = {
    "scramble_sweep": scenario_scramble_sweep,
}
