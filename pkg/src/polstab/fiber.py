"""Time-evolving fiber channel: birefringence drift, first-order PMD,
piezo scrambler, attenuation and side-channel noise rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels, quat
from .errors import ExtrapolationError, ValidationError
from .polarization import PolUnitary, StokesVector

PS = 1e-12
MEAN_DGD_S = 0.28 * PS
CHANNEL_SPACING_HZ = 100e9
#: angular-frequency offset of a 100 GHz ITU neighbour
CHANNEL_SPACING_RAD_S = 2.0 * math.pi * CHANNEL_SPACING_HZ

# mean of |sin(angle to an isotropic axis)| is pi/4, so a rotation of
# (4/pi)*rate*dt moves a probe SOP by rate*dt on average
_DRIFT_GAIN = 4.0 / math.pi
# per-component std of a Maxwellian vector with unit mean magnitude
_MAXWELL_SIGMA = math.sqrt(math.pi / 8.0)


@dataclass
class FiberChannelState:
    """Mutable fiber state owned by one simulation stepper.

    ``u_ref`` is the fiber unitary at the quantum wavelength (kept as a unit
    quaternion in ``q``).  The birefringence drifts as a rotation with
    angular speed ``(4/pi)*drift_rate`` about an axis that itself diffuses
    isotropically with correlation time ``drift_correlation_s``; a probe
    SOP therefore moves ``drift_rate`` radians per second on average, and
    the path is diffusive over times much longer than the correlation time.
    The PMD vector ``pmd`` (seconds) is an Ornstein-Uhlenbeck process whose
    stationary magnitude is Maxwellian with mean ``mean_dgd``.
    """

    q: np.ndarray = field(default_factory=lambda: quat.IDENTITY.copy())
    pmd: np.ndarray = field(default_factory=lambda: np.zeros(3))
    drift_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    mean_dgd: float = MEAN_DGD_S
    pmd_correlation_s: float = 1.0
    drift_rate: float = 0.0
    drift_correlation_s: float = 0.2
    loss_db: float = 4.3
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    t: float = 0.0

    @property
    def u_ref(self) -> PolUnitary:
        return PolUnitary.from_quaternion(self.q)


def make_fiber_state(seed=0, *, mean_dgd=MEAN_DGD_S, drift_rate=0.0, drift_correlation_s=0.2,
                     pmd_correlation_s=1.0, loss_db=4.3, u_ref=None) -> FiberChannelState:
    """Fresh fiber with a Haar-random ``u_ref`` (unless given) and a
    stationary draw of the PMD vector."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    q = quat.random_uniform(rng) if u_ref is None else np.array(u_ref.q)
    pmd = rng.standard_normal(3) * mean_dgd * _MAXWELL_SIGMA
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    return FiberChannelState(q=q, pmd=pmd, drift_axis=axis, mean_dgd=mean_dgd,
                             pmd_correlation_s=pmd_correlation_s, drift_rate=drift_rate,
                             drift_correlation_s=drift_correlation_s, loss_db=loss_db, rng=rng)


def advance_fiber(state: FiberChannelState, dt: float, n: int):
    """Advance ``n`` steps of ``dt``; returns per-step ``(q, pmd)`` arrays.

    The state is updated in place to the last step.  Six normals are drawn
    per step whatever the configuration, so the random stream layout does
    not depend on which processes are switched on.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    noise = state.rng.standard_normal((n, 6))
    drift_angle = _DRIFT_GAIN * state.drift_rate * dt
    axis_step = math.sqrt(dt / state.drift_correlation_s) if state.drift_correlation_s > 0 else 0.0
    if state.pmd_correlation_s > 0:
        rho = math.exp(-dt / state.pmd_correlation_s)
    else:
        rho = 0.0
    pmd_step = state.mean_dgd * _MAXWELL_SIGMA * math.sqrt(1.0 - rho * rho)
    qs, pmds, axis = kernels.fiber_walk(
        np.ascontiguousarray(state.q, dtype=float),
        np.ascontiguousarray(state.drift_axis, dtype=float),
        np.ascontiguousarray(state.pmd, dtype=float),
        noise, drift_angle, axis_step, rho, pmd_step,
    )
    if n:
        state.q = qs[-1].copy()
        state.pmd = pmds[-1].copy()
        state.drift_axis = np.asarray(axis, dtype=float)
    state.t += n * dt
    return qs, pmds


def step_fiber(state: FiberChannelState, dt: float) -> FiberChannelState:
    advance_fiber(state, dt, 1)
    return state


class WavelengthUnitary(NamedTuple):
    unitary: PolUnitary
    #: False when |tau|*|delta_omega| >= 1 and the first-order model is suspect
    first_order: bool


def pmd_rotation_quaternions(pmd, delta_omega):
    """Rotation by ``|tau| * delta_omega`` about the PMD axis (vectorised)."""
    return quat.from_rotation_vector(np.asarray(pmd, dtype=float) * delta_omega)


def unitary_at_wavelength(state: FiberChannelState, delta_omega: float) -> WavelengthUnitary:
    """Fiber unitary at ``delta_omega`` rad/s from the quantum wavelength.

    First-order PMD: ``exp(-i (tau.sigma) dw / 2) @ u_ref``.  Exactly
    ``u_ref`` at zero offset or zero DGD.
    """
    tau = float(np.linalg.norm(state.pmd))
    first_order = tau * abs(delta_omega) < 1.0
    if delta_omega == 0.0 or tau == 0.0:
        return WavelengthUnitary(state.u_ref, first_order)
    q = quat.qmul(pmd_rotation_quaternions(state.pmd, delta_omega), state.q)
    return WavelengthUnitary(PolUnitary.from_quaternion(q), first_order)


# --- scrambler -----------------------------------------------------------

ACTUATORS = 3


@dataclass(frozen=True)
class ScramblerState:
    """Three piezo actuators, each a triangle-wave rotation spanning 2*pi.

    ``ramp_frequency`` uses the scrambling-frequency convention in which
    1 Hz means a total rotation of 4*pi rad/s.  The three actuators share
    that budget, so each one ramps at ``ramp_frequency / 3``; the whole
    scrambler repeats with period ``3 / ramp_frequency``.  ``phases`` offset
    each actuator's ramp (radians of its own cycle).
    """

    axes: tuple = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    ramp_frequency: float = 0.0
    phases: tuple = (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)
    enabled: bool = False

    @property
    def actuator_frequency(self) -> float:
        return self.ramp_frequency / ACTUATORS

    @property
    def period(self) -> float:
        if self.ramp_frequency <= 0:
            return math.inf
        return 1.0 / self.actuator_frequency


def triangle(u):
    """Unit triangle wave: 0 at integers, 1 at half-integers."""
    u = np.asarray(u, dtype=float)
    return 1.0 - np.abs(1.0 - 2.0 * (u - np.floor(u)))


def scrambler_angles(s: ScramblerState, t) -> np.ndarray:
    """Actuator angles, shape ``(..., 3)``."""
    t = np.asarray(t, dtype=float)
    f = s.actuator_frequency
    ph = np.asarray(s.phases, dtype=float) / (2.0 * math.pi)
    return 2.0 * math.pi * triangle(f * t[..., None] + ph)


def scrambler_quaternions(s: ScramblerState, t) -> np.ndarray:
    """Scrambler unitary as quaternions for times ``t`` (vectorised)."""
    t = np.asarray(t, dtype=float)
    if not s.enabled:
        return np.broadcast_to(quat.IDENTITY, t.shape + (4,)).copy()
    theta = scrambler_angles(s, t)
    out = np.broadcast_to(quat.IDENTITY, t.shape + (4,)).copy()
    for i, axis in enumerate(s.axes):
        a = np.asarray(axis, dtype=float)
        out = quat.qmul(quat.from_axis_angle(a / np.linalg.norm(a), theta[..., i]), out)
    return out


def scrambler_unitary(s: ScramblerState, t: float) -> PolUnitary:
    if t < 0:
        raise ValidationError("scrambler time must be non-negative")
    return PolUnitary.from_quaternion(scrambler_quaternions(s, t))


def scrambler_rotation_rate(s: ScramblerState) -> float:
    """Sum of the actuators' angular speeds |d theta_i / dt| (rad/s)."""
    if not s.enabled:
        return 0.0
    return ACTUATORS * 4.0 * math.pi * s.actuator_frequency


# --- link budget ----------------------------------------------------------

@dataclass(frozen=True)
class ChannelBudget:
    fiber_loss_db: float = 4.3
    mux_insertion_db: float = 1.4
    demux_insertion_db: float = 1.4
    bpf_insertion_db: float = 1.4
    adjacent_extinction_db: float = 35.0
    nonadjacent_extinction_db: float = 45.0

    def problems(self) -> list:
        out = []
        for name in ("fiber_loss_db", "mux_insertion_db", "demux_insertion_db", "bpf_insertion_db",
                     "adjacent_extinction_db", "nonadjacent_extinction_db"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                out.append(f"budget.{name} must be a non-negative dB value, got {v}")
        return out

    @property
    def total_db(self) -> float:
        return self.fiber_loss_db + self.mux_insertion_db + self.demux_insertion_db + self.bpf_insertion_db


def channel_transmission(budget: ChannelBudget) -> float:
    """Linear power transmission of the quantum path."""
    problems = budget.problems()
    if problems:
        raise ValidationError("; ".join(problems))
    return 10.0 ** (-budget.total_db / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def dark_slot_duty_cycle(slot_ns: float, rep_rate_hz: float) -> float:
    """Fraction of each pulse period during which the references are on."""
    if rep_rate_hz <= 0:
        raise ValidationError("repetition rate must be positive")
    if slot_ns < 0:
        raise ValidationError("dark slot must be non-negative")
    period_ns = 1e9 / rep_rate_hz
    if slot_ns >= period_ns:
        raise ValidationError(
            f"dark slot {slot_ns} ns does not fit in the {period_ns:g} ns pulse period")
    return 1.0 - slot_ns * rep_rate_hz * 1e-9


# --- spontaneous Raman noise ----------------------------------------------

@dataclass(frozen=True)
class RamanTable:
    """Count probability per 1 ns gate at 1 mW versus pump detuning.

    ``delta_lambda_nm`` is pump minus quantum wavelength.  The band between
    the innermost negative and positive samples is the quantum filter
    passband and lies outside the table.
    """

    delta_lambda_nm: np.ndarray
    probability: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delta_lambda_nm, dtype=float)
        p = np.asarray(self.probability, dtype=float)
        if d.ndim != 1 or d.shape != p.shape or d.size < 2:
            raise ValidationError("Raman table needs two equal-length columns")
        if np.any(np.diff(d) <= 0):
            raise ValidationError("Raman table detunings must be strictly increasing")
        if np.any(p <= 0):
            raise ValidationError("Raman table probabilities must be positive")

    def lookup(self, delta_lambda_nm: float) -> float:
        d = np.asarray(self.delta_lambda_nm, dtype=float)
        p = np.asarray(self.probability, dtype=float)
        x = float(delta_lambda_nm)
        neg = d[d < 0]
        pos = d[d > 0]
        inside = d[0] <= x <= d[-1]
        in_gap = neg.size and pos.size and neg[-1] < x < pos[0]
        if not inside or in_gap:
            raise ExtrapolationError(f"detuning {x} nm is outside the Raman table")
        return float(10.0 ** np.interp(x, d, np.log10(p)))


def load_raman_table(path=None) -> RamanTable:
    """Read ``delta_lambda_nm, probability`` rows; ``#`` starts a comment.

    Columns may be separated by a comma or whitespace.  Without ``path`` the
    bundled table is used.
    """
    if path is None:
        text = resources.files("polstab.data").joinpath("raman_noise.txt").read_text()
    else:
        text = Path(path).read_text()
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ValidationError(f"Raman table line {lineno}: expected two columns")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ValidationError(f"Raman table line {lineno}: not a number") from None
    rows.sort()
    return RamanTable(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))


def raman_noise_probability(delta_lambda: float, side_power_mw: float, gate_ns: float,
                            table: RamanTable | None = None) -> float:
    """Raman count probability per gate, linear in pump power and gate width."""
    if side_power_mw < 0 or gate_ns < 0:
        raise ValidationError("power and gate width must be non-negative")
    table = table or load_raman_table()
    base = table.lookup(delta_lambda)
    return base * side_power_mw * gate_ns
