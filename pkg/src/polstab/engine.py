"""Time-stepped scenario runner.

The simulation clock ticks once per control-probe evaluation
(``control_period_s``).  Each tick advances the fiber, applies the
scrambler, lets the controller read the two reference photodiodes, and
transmits the pulses that fall inside the tick through the residual
transform ``U_T U_F``.  Ticks are grouped into reporting intervals of
``pulses_per_point`` sent pulses.

Random streams: the master seed is split with ``SeedSequence.spawn`` into
independent fiber, controller and pulse streams (in that order), so the
channel and controller trajectory is identical in analytic and Monte
Carlo mode.  Sweeps derive one master seed per scenario with
:func:`derive_seed`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import bb84, kernels, quat
from .bb84 import DetectorConfig, QberReport, SourceConfig
from .compensator import (
    DEFAULT_PHI_MAX,
    ReferenceChannel,
    decompose_unitary,
    reference_problems,
)
from .errors import ConfigError, ValidationError
from .fiber import (
    CHANNEL_SPACING_RAD_S,
    MEAN_DGD_S,
    ChannelBudget,
    ScramblerState,
    advance_fiber,
    channel_transmission,
    dark_slot_duty_cycle,
    make_fiber_state,
    pmd_rotation_quaternions,
    scrambler_quaternions,
)
from .polarization import D, H, PolUnitary, StokesVector

MODES = ("analytic", "montecarlo")
#: scenario fields a phase may override
PHASE_KEYS = ("control_enabled", "drift_rate", "drift_correlation_s", "scramble_frequency_hz")


@dataclass(frozen=True)
class Phase:
    name: str
    duration_s: float
    overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    duration_s: float = 2.0
    control_period_s: float = 100e-6
    pulses_per_point: int = 1_000_000
    drift_rate: float = 0.0
    drift_correlation_s: float = 0.2
    scramble_frequency_hz: float = 0.0
    control_enabled: bool = False
    mode: str = "analytic"
    phase_schedule: tuple = ()
    seed: int = 0
    align_at_start: bool = True
    source: SourceConfig = field(default_factory=SourceConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    budget: ChannelBudget = field(default_factory=ChannelBudget)
    mean_dgd_s: float = MEAN_DGD_S
    pmd_correlation_s: float = 1.0
    scrambler_phases: tuple = ScramblerState().phases
    reference_s1: StokesVector = H
    reference_s3: StokesVector = D
    reference_spacing_rad_s: float = CHANNEL_SPACING_RAD_S
    side_power_dbm: float = -7.4
    photodiode_noise_rms: float = 0.005
    dark_slot_ns: float = 13.5
    dither_amplitude: float = 0.043
    step_gain: float = 0.3
    phi_max: float = DEFAULT_PHI_MAX

    @property
    def pulse_rep_rate_hz(self) -> float:
        return self.source.rep_rate_hz

    def references(self):
        return (
            ReferenceChannel(+self.reference_spacing_rad_s, self.reference_s1, None,
                             self.side_power_dbm, self.photodiode_noise_rms),
            ReferenceChannel(-self.reference_spacing_rad_s, self.reference_s3, None,
                             self.side_power_dbm, self.photodiode_noise_rms),
        )

    def phases(self) -> tuple:
        if self.phase_schedule:
            return tuple(self.phase_schedule)
        return (Phase("main", self.duration_s, {}),)

    def with_overrides(self, overrides: dict) -> ScenarioConfig:
        return replace(self, **overrides)


@dataclass
class TimeSeriesPoint:
    t: float
    qber_total: float
    qber_opt: float
    qber_det: float
    qber_side: float
    objective: float
    resets: int
    phase: str = "main"
    report: QberReport = field(default_factory=QberReport, repr=False)


def config_problems(cfg: ScenarioConfig) -> list:
    """Every validation problem of ``cfg`` (empty when valid)."""
    out = []
    if not cfg.duration_s > 0:
        out.append("scenario.duration_s must be positive")
    if not cfg.control_period_s > 0:
        out.append("scenario.control_period_s must be positive")
    if not cfg.pulses_per_point > 0:
        out.append("scenario.pulses_per_point must be positive")
    if cfg.mode not in MODES:
        out.append(f"scenario.mode must be one of {MODES}, got {cfg.mode!r}")
    if cfg.drift_rate < 0:
        out.append("scenario.drift_rate must be non-negative")
    if not cfg.drift_correlation_s > 0:
        out.append("scenario.drift_correlation_s must be positive")
    if cfg.scramble_frequency_hz < 0:
        out.append("scenario.scramble_frequency_hz must be non-negative")
    if cfg.mean_dgd_s < 0:
        out.append("fiber.mean_dgd_ps must be non-negative")
    if not cfg.pmd_correlation_s > 0:
        out.append("fiber.pmd_correlation_s must be positive")
    if not cfg.dither_amplitude > 0:
        out.append("controller.dither_amplitude must be positive")
    if cfg.step_gain < 0:
        out.append("controller.step_gain must be non-negative")
    if cfg.phi_max < math.pi:
        out.append("controller.phi_max must be at least pi")
    if cfg.phase_schedule:
        total = 0.0
        for i, ph in enumerate(cfg.phase_schedule):
            if not ph.duration_s > 0:
                out.append(f"phase {i} ({ph.name}): duration must be positive")
            total += ph.duration_s
            bad = sorted(set(ph.overrides) - set(PHASE_KEYS))
            if bad:
                out.append(f"phase {i} ({ph.name}): cannot override {', '.join(bad)}")
        if abs(total - cfg.duration_s) > 1e-9 * max(1.0, cfg.duration_s):
            out.append(f"phase durations sum to {total:g} s but scenario.duration_s is {cfg.duration_s:g} s")
    out += cfg.source.problems()
    out += cfg.detector.problems()
    out += cfg.budget.problems()
    try:
        dark_slot_duty_cycle(cfg.dark_slot_ns, cfg.source.rep_rate_hz)
    except ValidationError as exc:
        out.append(f"dark slot: {exc}")
    out += reference_problems(*cfg.references())
    return out


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    problems = config_problems(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def derive_seed(master: int, index: int) -> int:
    """Seed of the ``index``-th scenario in a sweep started from ``master``."""
    return int(np.random.SeedSequence([master, index]).generate_state(1, dtype=np.uint64)[0])


def _even(n: int) -> int:
    n = max(2, int(round(n)))
    return n + (n % 2)


class _Runner:
    def __init__(self, cfg: ScenarioConfig, detection_log=None):
        self.cfg = cfg
        fiber_ss, ctrl_ss, pulse_ss = np.random.SeedSequence(cfg.seed).spawn(3)
        self.fiber = make_fiber_state(np.random.default_rng(fiber_ss), mean_dgd=cfg.mean_dgd_s,
                                      drift_rate=cfg.drift_rate,
                                      drift_correlation_s=cfg.drift_correlation_s,
                                      pmd_correlation_s=cfg.pmd_correlation_s,
                                      loss_db=cfg.budget.fiber_loss_db)
        self.ctrl_rng = np.random.default_rng(ctrl_ss)
        self.pulse_rng = np.random.default_rng(pulse_ss)
        self.dt = cfg.control_period_s
        self.pulses_per_tick = cfg.source.rep_rate_hz * cfg.control_period_s
        self.ticks_per_point = _even(cfg.pulses_per_point / self.pulses_per_tick)
        self.transmission = channel_transmission(cfg.budget)
        ch1, ch3 = cfg.references()
        self.ch = (ch1, ch3)
        self.vec = tuple(np.ascontiguousarray(v) for v in (
            ch1.launch_sop.unit().as_array(), ch1.analyzer.unit().as_array(),
            ch3.launch_sop.unit().as_array(), ch3.analyzer.unit().as_array()))
        self.tick = 0
        self.resets = 0
        self.unwraps = 0
        self.cycle_offset = 0.0
        self.scramble_f = 0.0
        self.detection_log = detection_log
        self.logged_header = False
        self.x = np.zeros(6)
        if cfg.align_at_start:
            u0 = PolUnitary.from_quaternion(self._base(np.array([0.0]), self.fiber.q[None, :])[0])
            self.x = decompose_unitary(u0.inverse(), cfg.phi_max).as_array()

    def _scrambler(self, f: float) -> ScramblerState:
        return ScramblerState(ramp_frequency=f, phases=self.cfg.scrambler_phases, enabled=f > 0)

    def _base(self, times, fiber_q):
        s = self._scrambler(self.scramble_f)
        scr = scrambler_quaternions(s, times + self.cycle_offset / max(s.actuator_frequency, 1e-300)) \
            if s.enabled else np.broadcast_to(quat.IDENTITY, times.shape + (4,))
        return quat.qmul(fiber_q, scr)

    def set_phase(self, phase_cfg: ScenarioConfig):
        t_b = self.tick * self.dt
        f_new = phase_cfg.scramble_frequency_hz
        # keep the actuator ramps continuous when the frequency changes
        if f_new > 0 and self.scramble_f > 0:
            self.cycle_offset += (self.scramble_f - f_new) / 3.0 * t_b
        elif f_new > 0:
            self.cycle_offset = 0.0
        self.scramble_f = f_new
        self.fiber.drift_rate = phase_cfg.drift_rate
        self.fiber.drift_correlation_s = phase_cfg.drift_correlation_s
        self.control = phase_cfg.control_enabled

    def _pulse_counts(self, n: int) -> np.ndarray:
        k = np.arange(self.tick, self.tick + n + 1, dtype=float)
        edges = np.floor(k * self.pulses_per_tick + 1e-9).astype(np.int64)
        return np.diff(edges)

    def chunk(self, n: int, phase_name: str) -> TimeSeriesPoint:
        cfg = self.cfg
        times = (self.tick + np.arange(n)) * self.dt
        fiber_q, pmd = advance_fiber(self.fiber, self.dt, n)
        base = self._base(times, fiber_q)
        (ch1, ch3) = self.ch
        a1 = quat.qmul(pmd_rotation_quaternions(pmd, ch1.wavelength_offset), base)
        a3 = quat.qmul(pmd_rotation_quaternions(pmd, ch3.wavelength_offset), base)
        noise = self.ctrl_rng.standard_normal((n, 2)) * np.array(
            [ch1.photodiode_noise_rms, ch3.photodiode_noise_rms])
        sign_u = self.ctrl_rng.random((n // 2, 6))
        sq, obj, self.x, resets, unwraps = kernels.control_loop(
            self.x, cfg.phi_max, cfg.dither_amplitude, cfg.step_gain, bool(self.control),
            a1, a3, *self.vec, noise, sign_u)
        self.resets += int(resets)
        self.unwraps += int(unwraps)
        residual = quat.qmul(sq, base)
        counts = self._pulse_counts(n)
        first_pulse = int(np.floor(self.tick * self.pulses_per_tick + 1e-9))
        if cfg.mode == "analytic":
            e = bb84.expected_counts(residual, cfg.source, cfg.detector, self.transmission)
            tot = counts @ e
            report = QberReport(sifted=float(tot[0]), errors_opt=float(tot[1]),
                                errors_det=float(tot[2]), errors_side=float(tot[3]),
                                sent=float(counts.sum()))
        else:
            per_pulse = np.repeat(residual, counts, axis=0)
            block = bb84.run_pulses(cfg.source, cfg.detector, self.transmission, per_pulse,
                                    self.pulse_rng)
            report = bb84.score_block(block)
            if self.detection_log is not None:
                bb84.write_detection_log(self.detection_log, block, first_pulse,
                                         append=self.logged_header)
                self.logged_header = True
        self.tick += n
        rates = _rates(report)
        return TimeSeriesPoint(self.tick * self.dt, *rates, float(np.mean(obj)), self.resets,
                               phase_name, report)


def _rates(report: QberReport):
    if report.sifted <= 0:
        return (math.nan,) * 4
    return report.qber_total, report.qber_opt, report.qber_det, report.qber_side


def run_scenario(cfg: ScenarioConfig, detection_log=None,
                 progress: Callable[[TimeSeriesPoint], None] | None = None) -> list:
    """Run ``cfg`` and return one :class:`TimeSeriesPoint` per reporting interval.

    Deterministic for a given seed and kernel backend.  In Monte Carlo mode
    ``detection_log`` (a path) receives every sifted event.
    """
    validate(cfg)
    runner = _Runner(cfg, detection_log)
    points = []
    for ph in cfg.phases():
        phase_cfg = cfg.with_overrides(ph.overrides)
        runner.set_phase(phase_cfg)
        remaining = _even(ph.duration_s / cfg.control_period_s)
        while remaining > 0:
            n = min(runner.ticks_per_point, remaining)
            point = runner.chunk(n, ph.name)
            points.append(point)
            if progress is not None:
                progress(point)
            remaining -= n
    return points


def pooled_report(points, phase: str | None = None) -> QberReport:
    total = QberReport()
    for p in points:
        if phase is None or p.phase == phase:
            total = total + p.report
    return total


CSV_COLUMNS = ("t_s", "qber_total", "qber_opt", "qber_det", "qber_side", "objective", "resets", "phase")


def _fmt(v) -> str:
    return repr(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v))


def write_timeseries(path, points) -> None:
    """Comma-separated time series with a header row; floats are written
    with ``repr`` so a re-parse is exact."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in points:
            w.writerow([_fmt(p.t), _fmt(p.qber_total), _fmt(p.qber_opt), _fmt(p.qber_det),
                        _fmt(p.qber_side), _fmt(p.objective), str(int(p.resets)), p.phase])


def read_timeseries(path) -> list:
    """Parse a file written by :func:`write_timeseries` (``report`` is left empty)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValidationError(f"{path}: header must be {','.join(CSV_COLUMNS)}")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_COLUMNS):
            raise ValidationError(f"{path}:{i}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        out.append(TimeSeriesPoint(*(float(v) for v in row[:6]), int(row[6]), row[7]))
    return out
