"""Polarization-encoded BB84: weak-coherent source, PBS receiver with two
gated single-photon detectors, sifting and an error budget split by cause.

Alphabet: basis 0 is H/V, basis 1 is D/A; bit 0 is H or D.  Index of a
state is ``2*basis + bit``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, NamedTuple

import numpy as np

from . import quat
from .errors import UndefinedRateError, ValidationError
from .polarization import JonesVector, PolUnitary, StokesVector, fidelity, stokes_from_jones

ALPHABET = (
    JonesVector(1.0 + 0j, 0j),
    JonesVector(0j, 1.0 + 0j),
    JonesVector.normalized(1, 1),
    JonesVector.normalized(1, -1),
)
#: Stokes vector of the bit-0 state of each basis
BASIS_AXES = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


class Cause(IntEnum):
    NONE = 0
    SIGNAL = 1
    DARK = 2
    SIDE = 3


@dataclass(frozen=True)
class SourceConfig:
    mu: float = 0.1
    rep_rate_hz: float = 5e6
    alphabet: tuple = ALPHABET
    modulator_error_rms: float = 0.0
    #: send only this alphabet index and measure in its basis (None: random BB84)
    fixed_state: int | None = None

    def problems(self) -> list:
        out = []
        if not self.mu > 0:
            out.append(f"source.mu must be positive, got {self.mu}")
        if not self.rep_rate_hz > 0:
            out.append(f"source.rep_rate_hz must be positive, got {self.rep_rate_hz}")
        if self.modulator_error_rms < 0:
            out.append("source.modulator_error_rms must be non-negative")
        if self.fixed_state is not None and self.fixed_state not in range(4):
            out.append("source.fixed_state must be 0..3")
        if len(self.alphabet) != 4:
            out.append("source alphabet needs four states")
        else:
            for b0 in (0, 1):
                for b1 in (2, 3):
                    f = fidelity(self.alphabet[b0], self.alphabet[b1])
                    if abs(f - 0.5) > 1e-9:
                        out.append("alphabet bases are not mutually unbiased")
                        return out
        return out

    def alphabet_stokes(self) -> np.ndarray:
        return np.array([stokes_from_jones(j).as_array() for j in self.alphabet])


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float = 0.1
    dark_count_prob: float = 1e-5
    gate_ns: float = 1.0
    pbs_extinction_db: float = 22.0
    side_noise_prob: float = 0.0

    @property
    def leakage(self) -> float:
        """Fraction of light leaving the PBS through the wrong port."""
        eps = 10.0 ** (-self.pbs_extinction_db / 10.0)
        return eps / (1.0 + eps)

    def problems(self) -> list:
        out = []
        for name in ("efficiency", "dark_count_prob", "side_noise_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                out.append(f"detector.{name} must be a probability, got {v}")
        if not self.pbs_extinction_db > 0:
            out.append("detector.pbs_extinction_db must be positive")
        if not self.gate_ns > 0:
            out.append("detector.gate_ns must be positive")
        return out


def leakage_from_extinction(epsilon: float) -> float:
    return epsilon / (1.0 + epsilon)


@dataclass
class PulseOutcome:
    alice_bit: int
    alice_basis: int
    bob_basis: int
    click0: bool
    click1: bool
    cause: Cause
    bob_bit: int = -1


@dataclass
class OutcomeBlock:
    """Column-oriented block of pulse outcomes (one entry per pulse)."""

    alice_bit: np.ndarray
    alice_basis: np.ndarray
    bob_basis: np.ndarray
    click0: np.ndarray
    click1: np.ndarray
    cause: np.ndarray
    bob_bit: np.ndarray

    def __len__(self):
        return len(self.cause)

    @classmethod
    def from_outcomes(cls, outcomes: Iterable[PulseOutcome]) -> OutcomeBlock:
        rows = list(outcomes)
        col = lambda name, dt: np.array([getattr(o, name) for o in rows], dtype=dt)  # noqa: E731
        return cls(col("alice_bit", np.int8), col("alice_basis", np.int8), col("bob_basis", np.int8),
                   col("click0", bool), col("click1", bool), col("cause", np.int8),
                   col("bob_bit", np.int8))

    def outcome(self, i: int) -> PulseOutcome:
        return PulseOutcome(int(self.alice_bit[i]), int(self.alice_basis[i]), int(self.bob_basis[i]),
                            bool(self.click0[i]), bool(self.click1[i]), Cause(int(self.cause[i])),
                            int(self.bob_bit[i]))


@dataclass
class QberReport:
    """Sifted-key error counts split by cause.

    Counts are floats so that expected values (analytic mode) and observed
    integers (Monte Carlo) share one type; reports add associatively.
    """

    sifted: float = 0.0
    errors_opt: float = 0.0
    errors_det: float = 0.0
    errors_side: float = 0.0
    sent: float = 0.0

    def __add__(self, other: QberReport) -> QberReport:
        return QberReport(self.sifted + other.sifted, self.errors_opt + other.errors_opt,
                          self.errors_det + other.errors_det, self.errors_side + other.errors_side,
                          self.sent + other.sent)

    @property
    def errors(self) -> float:
        return self.errors_opt + self.errors_det + self.errors_side

    def _rate(self, n: float) -> float:
        if self.sifted <= 0:
            raise UndefinedRateError("no sifted events: error rate undefined")
        return n / self.sifted

    @property
    def qber_total(self) -> float:
        return self._rate(self.errors)

    @property
    def qber_opt(self) -> float:
        return self._rate(self.errors_opt)

    @property
    def qber_det(self) -> float:
        return self._rate(self.errors_det)

    @property
    def qber_side(self) -> float:
        return self._rate(self.errors_side)

    @property
    def sifted_count(self) -> float:
        return self.sifted

    @property
    def sent_count(self) -> float:
        return self.sent

    def standard_error(self) -> float:
        """Binomial standard error of ``qber_total``."""
        q = self.qber_total
        return math.sqrt(max(q * (1.0 - q), 0.0) / self.sifted)


# --- source ---------------------------------------------------------------

class Transmission(NamedTuple):
    photon_count: int
    prepared: JonesVector
    alice_bit: int
    alice_basis: int


def _perturb(stokes: np.ndarray, sigma: float, rng) -> np.ndarray:
    """Tilt each SOP by a N(0, sigma) angle towards a uniformly random direction."""
    n = stokes.shape[0]
    a = rng.standard_normal(n) * sigma
    phi = rng.random(n) * 2.0 * math.pi
    if sigma == 0.0:
        return stokes
    helper = np.where(np.abs(stokes[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    e1 = np.cross(stokes, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(stokes, e1)
    tilt = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
    return np.cos(a)[:, None] * stokes + np.sin(a)[:, None] * tilt


def transmit_block(src: SourceConfig, n: int, rng):
    """``n`` pulses: photon numbers, prepared Stokes vectors, bits, bases."""
    counts = rng.poisson(src.mu, n)
    if src.fixed_state is None:
        bits = rng.integers(0, 2, n, dtype=np.int8)
        bases = rng.integers(0, 2, n, dtype=np.int8)
    else:
        bits = np.full(n, src.fixed_state % 2, dtype=np.int8)
        bases = np.full(n, src.fixed_state // 2, dtype=np.int8)
    stokes = src.alphabet_stokes()[2 * bases + bits]
    stokes = _perturb(stokes, src.modulator_error_rms, rng)
    return counts, stokes, bits, bases


def transmit_pulse(src: SourceConfig, rng) -> Transmission:
    counts, stokes, bits, bases = transmit_block(src, 1, rng)
    if src.modulator_error_rms == 0.0:
        prepared = src.alphabet[2 * int(bases[0]) + int(bits[0])]
    else:
        prepared = JonesVector.from_stokes(StokesVector.of(stokes[0]))
    return Transmission(int(counts[0]), prepared, int(bits[0]), int(bases[0]))


# --- receiver -------------------------------------------------------------

def detect_block(counts, arriving, bob_bases, det: DetectorConfig, transmission: float, rng):
    """Vectorised receiver.  Returns ``(click0, click1, bob_bit, cause)``.

    Each photon survives with ``transmission * efficiency``; a survivor
    exits the PBS port of the measured state with probability
    ``(1 + s.m)/2``, mixed with the extinction leakage.  Dark and
    side-channel counts fire independently per detector.  Double clicks
    are resolved by a fair coin; a detector with a photon is labelled
    ``SIGNAL``, otherwise ``SIDE`` before ``DARK``.
    """
    if not 0.0 < transmission <= 1.0:
        raise ValidationError("transmission must lie in (0, 1]")
    counts = np.asarray(counts)
    n = counts.shape[0]
    lam = det.leakage
    survivors = rng.binomial(counts, transmission * det.efficiency)
    m = BASIS_AXES[np.asarray(bob_bases)]
    p0 = 0.5 * (1.0 + np.einsum("ij,ij->i", np.asarray(arriving, dtype=float), m))
    p0 = np.clip(p0 * (1.0 - lam) + (1.0 - p0) * lam, 0.0, 1.0)
    k0 = rng.binomial(survivors, p0)
    k1 = survivors - k0
    u = rng.random((n, 5))
    side0 = u[:, 0] < det.side_noise_prob
    side1 = u[:, 1] < det.side_noise_prob
    dark0 = u[:, 2] < det.dark_count_prob
    dark1 = u[:, 3] < det.dark_count_prob
    coin = u[:, 4] < 0.5

    def label(k, side, dark):
        c = np.full(n, Cause.NONE, dtype=np.int8)
        c[dark] = Cause.DARK
        c[side] = Cause.SIDE
        c[k > 0] = Cause.SIGNAL
        return c

    c0 = label(k0, side0, dark0)
    c1 = label(k1, side1, dark1)
    click0 = c0 != Cause.NONE
    click1 = c1 != Cause.NONE
    pick1 = np.where(click0 & click1, coin, click1)
    bob_bit = np.where(click0 | click1, pick1.astype(np.int8), -1).astype(np.int8)
    cause = np.where(pick1, c1, c0).astype(np.int8)
    return click0, click1, bob_bit, cause


def detect_pulse(photon_count: int, arriving: JonesVector, bob_basis: int, det: DetectorConfig,
                 transmission: float, rng, alice_bit: int = 0, alice_basis: int = 0) -> PulseOutcome:
    s = stokes_from_jones(arriving).as_array()[None, :]
    click0, click1, bob_bit, cause = detect_block(np.array([photon_count]), s, np.array([bob_basis]),
                                                  det, transmission, rng)
    return PulseOutcome(alice_bit, alice_basis, bob_basis, bool(click0[0]), bool(click1[0]),
                        Cause(int(cause[0])), int(bob_bit[0]))


def run_pulses(src: SourceConfig, det: DetectorConfig, transmission: float, residual_q, rng):
    """Simulate pulses through per-pulse residual unitaries (quaternions).

    ``residual_q`` has shape ``(n, 4)`` (or ``(4,)`` for a static channel
    together with an explicit count via :func:`run_static_pulses`).
    """
    residual_q = np.asarray(residual_q, dtype=float)
    n = residual_q.shape[0]
    counts, stokes, bits, bases = transmit_block(src, n, rng)
    if src.fixed_state is None:
        bob_bases = rng.integers(0, 2, n, dtype=np.int8)
    else:
        bob_bases = bases.copy()
    arriving = quat.rotate(residual_q, stokes)
    click0, click1, bob_bit, cause = detect_block(counts, arriving, bob_bases, det, transmission, rng)
    return OutcomeBlock(bits, bases, bob_bases, click0, click1, cause, bob_bit)


def run_static_pulses(src, det, transmission, residual: PolUnitary, n: int, rng) -> OutcomeBlock:
    q = np.broadcast_to(residual.quaternion, (n, 4))
    return run_pulses(src, det, transmission, q, rng)


# --- sifting --------------------------------------------------------------

def sift_mask(block: OutcomeBlock) -> np.ndarray:
    return (block.alice_basis == block.bob_basis) & (block.cause != Cause.NONE)


def score_block(block: OutcomeBlock) -> QberReport:
    """Counts without the non-empty check (used by the engine)."""
    keep = sift_mask(block)
    err = keep & (block.bob_bit != block.alice_bit)
    cause = block.cause
    return QberReport(
        sifted=float(keep.sum()),
        errors_opt=float((err & (cause == Cause.SIGNAL)).sum()),
        errors_det=float((err & (cause == Cause.DARK)).sum()),
        errors_side=float((err & (cause == Cause.SIDE)).sum()),
        sent=float(len(block)),
    )


def sift_and_score(outcomes) -> QberReport:
    """Keep matching-basis clicks and classify the errors by cause."""
    block = outcomes if isinstance(outcomes, OutcomeBlock) else OutcomeBlock.from_outcomes(outcomes)
    if len(block) == 0:
        raise ValidationError("no outcomes to score")
    report = score_block(block)
    if report.sifted == 0:
        raise UndefinedRateError("no sifted events: error rate undefined")
    return report


def write_detection_log(path, block: OutcomeBlock, first_pulse: int = 0, append: bool = False) -> int:
    """One row per sifted event; returns the number of rows written."""
    keep = np.flatnonzero(sift_mask(block))
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(["pulse_index", "alice_basis", "alice_bit", "bob_basis", "bob_bit", "cause"])
        for i in keep:
            w.writerow([first_pulse + int(i), int(block.alice_basis[i]), int(block.alice_bit[i]),
                        int(block.bob_basis[i]), int(block.bob_bit[i]), Cause(int(block.cause[i])).name.lower()])
    return len(keep)


def read_detection_log(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- analytic mode --------------------------------------------------------

def expected_qber_opt(residual: PolUnitary, alphabet=ALPHABET, epsilon: float = 0.0) -> float:
    """Single-photon wrong-port probability averaged over the alphabet."""
    lam = leakage_from_extinction(epsilon)
    total = 0.0
    for state in alphabet:
        f = fidelity(state, residual.apply(state))
        total += (1.0 - f) * (1.0 - lam) + f * lam
    return total / len(alphabet)


def expected_counts(residual_q, src: SourceConfig, det: DetectorConfig, transmission: float) -> np.ndarray:
    """Exact per-pulse expectations ``(sifted, err_opt, err_det, err_side)``.

    Vectorised over residual quaternions ``(..., 4)``.  Photon numbers
    split into independent Poisson streams at the two PBS ports, so the
    click statistics of the correct and the wrong detector factorise.
    The modulator error enters as the mean shrink ``exp(-sigma^2/2)`` of
    the prepared Stokes vector, exact to first order in the detection
    probability.
    """
    residual_q = np.asarray(residual_q, dtype=float)
    stokes = src.alphabet_stokes()
    if src.fixed_state is None:
        states = range(4)
    else:
        states = (src.fixed_state,)
    lam = det.leakage
    m_tot = src.mu * transmission * det.efficiency
    shrink = math.exp(-0.5 * src.modulator_error_rms ** 2)
    ps, pd = det.side_noise_prob, det.dark_count_prob
    out = np.zeros(residual_q.shape[:-1] + (4,))
    for idx in states:
        s = stokes[idx]
        r = quat.rotate(residual_q, s)
        pc = 0.5 * (1.0 + shrink * (r @ s))
        pc = pc * (1.0 - lam) + (1.0 - pc) * lam
        sc = 1.0 - np.exp(-m_tot * pc)
        sw = 1.0 - np.exp(-m_tot * (1.0 - pc))
        none_c = (1.0 - sc) * (1.0 - ps) * (1.0 - pd)
        none_w = (1.0 - sw) * (1.0 - ps) * (1.0 - pd)
        weight = 0.5 * (1.0 + none_c)
        sifted = 1.0 - none_c * none_w
        e_opt = sw * weight
        e_side = (1.0 - sw) * ps * weight
        e_det = (1.0 - sw) * (1.0 - ps) * pd * weight
        out += np.stack([sifted, e_opt, e_det, e_side], axis=-1)
    # random BB84: each state has probability 1/4 and Bob's basis matches half the time
    scale = 1.0 if src.fixed_state is not None else 1.0 / 8.0
    return out * scale


def expected_report(residual: PolUnitary, src: SourceConfig, det: DetectorConfig,
                    transmission: float, pulses: float) -> QberReport:
    e = expected_counts(residual.quaternion, src, det, transmission) * pulses
    return QberReport(sifted=float(e[0]), errors_opt=float(e[1]), errors_det=float(e[2]),
                      errors_side=float(e[3]), sent=float(pulses))
