"""Polarization stabilisation: exact compensator, waveplate controller,
reference-channel photodiodes and the feedback control loop."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import quat
from .errors import DegenerateReferencesError, ValidationError
from .fiber import CHANNEL_SPACING_RAD_S
from .polarization import (
    D,
    H,
    PolUnitary,
    StokesVector,
    rotation_about,
    rotation_between,
)

N_PLATES = 6
#: Poincare axes of the plates: 0 deg -> s1, 45 deg -> s2, alternating
PLATE_AXES = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] * 3)
DEFAULT_PHI_MAX = 3.0 * math.pi
COLLINEARITY_THRESHOLD = 0.99
_EXACT_COLLINEAR_TOL = 1e-6


def _check_references(s1: StokesVector, s3: StokesVector, threshold: float) -> None:
    c = abs(s1.unit().dot(s3.unit()))
    if c >= threshold:
        raise DegenerateReferencesError(
            f"reference SOPs are collinear on the Poincare sphere (|s1.s3| = {c:.6f}); "
            "the rotation about their common axis cannot be observed")


def compensator_exact(u_f: PolUnitary, s1: StokesVector, s3: StokesVector):
    """Rotations ``(r1, r3)`` with ``r3 @ r1 @ u_f`` equal to the identity.

    ``r1`` returns the fiber output of ``s1`` to ``s1`` along the shortest
    arc; ``r3`` turns about the ``s1`` axis, which leaves ``s1`` fixed,
    until ``s3`` is also restored.
    """
    _check_references(s1, s3, 1.0 - _EXACT_COLLINEAR_TOL)
    a = s1.unit().as_array()
    b = s3.unit().as_array()
    out1 = u_f.rotate(s1.unit())
    perp = b - (b @ a) * a
    r1 = rotation_between(out1, s1.unit(), tie_break=StokesVector.of(perp))
    v = (r1 @ u_f).rotate(s3.unit()).as_array()
    vp = v - (v @ a) * a
    angle = math.atan2(float(np.cross(vp, perp) @ a), float(vp @ perp))
    r3 = rotation_about(StokesVector.of(a), angle)
    return r1, r3


def reference_lock(u_1: PolUnitary, u_3: PolUnitary, s1: StokesVector, s3: StokesVector) -> PolUnitary:
    """Compensator maximising the summed reference intensities.

    ``u_1`` and ``u_3`` are the fiber unitaries at the two reference
    wavelengths.  When they differ no rotation restores both references
    exactly; the best one in the least-squares sense solves Wahba's problem
    and is found from an SVD (Kabsch).  With ``u_1 == u_3`` this is the
    exact inverse.
    """
    _check_references(s1, s3, 1.0 - _EXACT_COLLINEAR_TOL)
    a = np.stack([u_1.rotate(s1.unit()).as_array(), u_3.rotate(s3.unit()).as_array()])
    b = np.stack([s1.unit().as_array(), s3.unit().as_array()])
    m = b.T @ a
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    return PolUnitary.from_quaternion(quat.from_matrix(r))


# --- waveplate stack ------------------------------------------------------

@dataclass(frozen=True)
class WaveplateStack:
    """Six bounded retarders alternating between the s1 and s2 axes.

    Plate 0 is traversed first, so the device unitary is
    ``P5 @ P4 @ ... @ P0``.
    """

    retardances: tuple = (0.0,) * N_PLATES
    phi_max: float = DEFAULT_PHI_MAX

    def __post_init__(self):
        if len(self.retardances) != N_PLATES:
            raise ValidationError(f"a stack has exactly {N_PLATES} plates")
        object.__setattr__(self, "retardances", tuple(float(r) for r in self.retardances))

    def as_array(self) -> np.ndarray:
        return np.array(self.retardances)

    def in_bounds(self) -> bool:
        return all(abs(r) <= self.phi_max + 1e-12 for r in self.retardances)

    def with_retardances(self, values) -> WaveplateStack:
        return replace(self, retardances=tuple(float(v) for v in values))


def stack_quaternions(retardances) -> np.ndarray:
    """Device quaternion(s) for retardance array(s) of shape ``(..., 6)``."""
    x = np.asarray(retardances, dtype=float)
    q = np.broadcast_to(quat.IDENTITY, x.shape[:-1] + (4,)).copy()
    for i in range(N_PLATES):
        q = quat.qmul(quat.from_axis_angle(PLATE_AXES[i], x[..., i]), q)
    return q


def stack_unitary(stack: WaveplateStack) -> PolUnitary:
    if not stack.in_bounds():
        raise ValidationError(
            f"retardance outside [-{stack.phi_max:.4g}, {stack.phi_max:.4g}]: {stack.retardances}")
    u = PolUnitary.identity()
    for axis, r in zip(PLATE_AXES, stack.retardances):
        u = rotation_about(StokesVector.of(axis), r) @ u
    return u


def decompose_unitary(target: PolUnitary, phi_max: float = DEFAULT_PHI_MAX) -> WaveplateStack:
    """Retardances reproducing ``target`` (up to global phase).

    Uses the first three plates as an s1-s2-s1 Euler decomposition; the
    remaining plates are left at zero.  All angles lie in [-pi, pi].
    """
    m = target.rotation_matrix
    beta = math.acos(float(np.clip(m[0, 0], -1.0, 1.0)))
    if abs(math.sin(beta)) < 1e-9:
        alpha = math.atan2(m[2, 1], m[1, 1])
        gamma = 0.0
    else:
        alpha = math.atan2(m[1, 0], -m[2, 0])
        gamma = math.atan2(m[0, 1], m[0, 2])
    if phi_max < math.pi:
        raise ValidationError("phi_max below pi cannot reach every unitary with three plates")
    return WaveplateStack((gamma, beta, alpha, 0.0, 0.0, 0.0), phi_max)


# --- reference channels ---------------------------------------------------

@dataclass(frozen=True)
class ReferenceChannel:
    """Classical reference laser, its polariser and p-i-n photodiode.

    ``wavelength_offset`` is in rad/s relative to the quantum channel.
    ``analyzer_sop`` defaults to the launch SOP (aligned polariser).
    """

    wavelength_offset: float
    launch_sop: StokesVector
    analyzer_sop: StokesVector | None = None
    power_dbm: float = -7.4
    photodiode_noise_rms: float = 0.005

    @property
    def analyzer(self) -> StokesVector:
        return self.launch_sop if self.analyzer_sop is None else self.analyzer_sop


def default_references(s1: StokesVector = H, s3: StokesVector = D, noise_rms: float = 0.005):
    """The two side channels: one 100 GHz above the quantum wavelength in
    frequency (shorter wavelength), one 100 GHz below."""
    return (
        ReferenceChannel(+CHANNEL_SPACING_RAD_S, s1, photodiode_noise_rms=noise_rms),
        ReferenceChannel(-CHANNEL_SPACING_RAD_S, s3, photodiode_noise_rms=noise_rms),
    )


def reference_problems(ch1: ReferenceChannel, ch3: ReferenceChannel,
                       threshold: float = COLLINEARITY_THRESHOLD) -> list:
    out = []
    for name, ch in (("reference1", ch1), ("reference3", ch3)):
        if abs(ch.launch_sop.norm() - 1.0) > 1e-6:
            out.append(f"{name}: launch SOP must be a unit Stokes vector")
        if abs(ch.analyzer.norm() - 1.0) > 1e-6:
            out.append(f"{name}: analyzer SOP must be a unit Stokes vector")
        elif ch.analyzer.unit().dot(ch.launch_sop.unit()) < 1.0 - 1e-9:
            out.append(f"{name}: analyzer must be aligned with the launch SOP")
        if ch.photodiode_noise_rms < 0:
            out.append(f"{name}: photodiode noise must be non-negative")
    try:
        c = abs(ch1.launch_sop.unit().dot(ch3.launch_sop.unit()))
    except ValidationError:
        return out
    if c >= threshold:
        out.append(
            f"collinear references: |s1.s3| = {c:.4f} >= {threshold}; control fails when the two "
            "reference SOPs lie close to the same axis of the Poincare sphere")
    return out


def measure_reference(ch: ReferenceChannel, total_unitary: PolUnitary, rng=None) -> float:
    """Normalised photodiode reading behind the channel's polariser.

    ``total_unitary`` is compensator times fiber, evaluated at this
    channel's wavelength.  The dark slot is averaged out by the receiver's
    low-pass filter and does not appear here.
    """
    out = total_unitary.rotate(ch.launch_sop.unit())
    i = 0.5 * (1.0 + out.dot(ch.analyzer.unit()))
    if rng is not None and ch.photodiode_noise_rms > 0:
        i += ch.photodiode_noise_rms * rng.standard_normal()
    return min(1.0, max(0.0, i))


# --- feedback controller --------------------------------------------------

@dataclass
class ControllerState:
    """SPSA gradient-ascent controller on ``I1 + I3``."""

    stack: WaveplateStack = field(default_factory=WaveplateStack)
    dither_amplitude: float = 0.043
    step_gain: float = 0.3
    objective_history: deque = field(default_factory=lambda: deque(maxlen=256))
    resets: int = 0
    unwraps: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    @property
    def objective(self) -> float:
        return self.objective_history[-1] if self.objective_history else float("nan")


def _saturated(x: np.ndarray, phi_max: float, margin: float) -> bool:
    return bool(np.all(np.abs(x) >= phi_max - margin))


def reset_stack(ctl: ControllerState, hard: bool = False) -> ControllerState:
    """Unwind saturated plates by 2*pi, or zero the stack if that is impossible.

    A 2*pi retardance step is the identity on the Poincare sphere, so the
    unwind leaves the device transform unchanged.  A hard reset zeros every
    plate and counts in ``resets``; the transient error it causes is
    accounted for downstream.
    """
    x = ctl.stack.as_array()
    phi_max = ctl.stack.phi_max
    margin = ctl.dither_amplitude
    if not hard:
        near = np.abs(x) >= phi_max - margin
        if not near.any():
            return ctl
        shifted = x - 2.0 * math.pi * np.sign(x) * near
        if np.all(np.abs(shifted) <= phi_max - margin):
            ctl.stack = ctl.stack.with_retardances(shifted)
            ctl.unwraps += 1
            return ctl
    ctl.stack = ctl.stack.with_retardances(np.zeros(N_PLATES))
    ctl.resets += 1
    return ctl


IntensityProbe = Callable[[np.ndarray], "tuple[float, float]"]


def control_step(ctl: ControllerState, intensity_probe: IntensityProbe) -> ControllerState:
    """One simultaneous-perturbation iteration.

    All six plates are dithered by ``+-dither_amplitude`` with random signs,
    the probe is read at both trial settings, and the retardances move
    along the resulting gradient estimate of ``I1 + I3``.
    """
    c = ctl.dither_amplitude
    a = ctl.step_gain
    phi_max = ctl.stack.phi_max
    x = ctl.stack.as_array()
    delta = np.where(ctl.rng.random(N_PLATES) < 0.5, -1.0, 1.0)
    xp = np.clip(x + c * delta, -phi_max, phi_max)
    xm = np.clip(x - c * delta, -phi_max, phi_max)
    jp = sum(intensity_probe(xp))
    jm = sum(intensity_probe(xm))
    g = a * (jp - jm) / (2.0 * c)
    x = np.clip(x + g * delta, -phi_max, phi_max)
    ctl.stack = ctl.stack.with_retardances(x)
    ctl.objective_history.append(0.5 * (jp + jm))
    if _saturated(x, phi_max, c):
        reset_stack(ctl)
    return ctl


def static_probe(u_f: PolUnitary, channels, rng=None) -> IntensityProbe:
    """Probe for a channel that does not move while the controller works.

    ``u_f`` may be one unitary or a pair (one per reference wavelength).
    """
    if isinstance(u_f, PolUnitary):
        u_f = (u_f, u_f)

    def probe(retardances):
        s = PolUnitary.from_quaternion(stack_quaternions(retardances))
        return tuple(measure_reference(ch, s @ u, rng) for ch, u in zip(channels, u_f))

    return probe


def objective_value(stack_q, fiber_q1, fiber_q3, ch1: ReferenceChannel, ch3: ReferenceChannel):
    """Noise-free ``I1 + I3`` (vectorised over leading axes)."""
    out1 = quat.rotate(quat.qmul(stack_q, fiber_q1), ch1.launch_sop.unit().as_array())
    out3 = quat.rotate(quat.qmul(stack_q, fiber_q3), ch3.launch_sop.unit().as_array())
    return 0.5 * (2.0 + out1 @ ch1.analyzer.unit().as_array() + out3 @ ch3.analyzer.unit().as_array())


def probe_infidelity(residual: PolUnitary, probes) -> float:
    """Worst ``1 - F`` of the residual transform over probe SOPs."""
    worst = 0.0
    for p in probes:
        s = p.unit()
        worst = max(worst, 0.5 * (1.0 - residual.rotate(s).dot(s)))
    return worst
