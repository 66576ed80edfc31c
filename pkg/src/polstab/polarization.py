"""Exact polarization algebra on Jones vectors and the Poincare sphere.

Conventions
-----------
Jones vectors are ``(a0, a1)`` in the horizontal/vertical basis.  The Stokes
map is::

    s1 = |a0|^2 - |a1|^2
    s2 = 2 Re(conj(a0) a1)
    s3 = 2 Im(conj(a0) a1)

so ``H = (1, 0) -> (1, 0, 0)``, ``D = (1, 1)/sqrt2 -> (0, 1, 0)`` and
``R = (1, i)/sqrt2 -> (0, 0, 1)``.  Rotations follow the right-hand rule
about their Stokes axis.  Unitaries are normalised to ``det = 1``; they are
therefore defined up to an overall sign, and SOPs are compared through
their Stokes vectors, never through raw Jones phases.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

import numpy as np

from . import quat
from .errors import AmbiguousAxisError, ValidationError

NORM_TOL = 1e-9
_PAULI = (
    np.array([[1, 0], [0, -1]], dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
)


@dataclass(frozen=True)
class JonesVector:
    a0: complex
    a1: complex

    @classmethod
    def normalized(cls, a0, a1) -> JonesVector:
        n = np.sqrt(abs(a0) ** 2 + abs(a1) ** 2)
        if n == 0:
            raise ValidationError("zero Jones vector")
        return cls(complex(a0) / n, complex(a1) / n)

    @classmethod
    def from_stokes(cls, s: StokesVector) -> JonesVector:
        """One Jones representative (a0 real, non-negative) of a pure SOP."""
        v = s.unit().as_array()
        theta = np.arccos(np.clip(v[0], -1.0, 1.0))
        phi = np.arctan2(v[2], v[1])
        return cls(complex(np.cos(theta / 2)), complex(np.sin(theta / 2) * np.exp(1j * phi)))

    def as_array(self) -> np.ndarray:
        return np.array([self.a0, self.a1], dtype=complex)

    def norm2(self) -> float:
        return abs(self.a0) ** 2 + abs(self.a1) ** 2

    def check_normalized(self, tol: float = NORM_TOL) -> None:
        if abs(self.norm2() - 1.0) > tol:
            raise ValidationError(f"Jones vector not normalised: |a|^2 = {self.norm2():.12g}")


@dataclass(frozen=True)
class StokesVector:
    s1: float
    s2: float
    s3: float

    @classmethod
    def of(cls, v) -> StokesVector:
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.s1, self.s2, self.s3])

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    def unit(self) -> StokesVector:
        n = self.norm()
        if n < 1e-15:
            raise ValidationError("zero Stokes vector has no direction")
        return StokesVector.of(self.as_array() / n)

    def dot(self, other: StokesVector) -> float:
        return float(self.as_array() @ other.as_array())

    def antipode(self) -> StokesVector:
        return StokesVector(-self.s1, -self.s2, -self.s3)


H = StokesVector(1.0, 0.0, 0.0)
D = StokesVector(0.0, 1.0, 0.0)
R = StokesVector(0.0, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class PolUnitary:
    """Special-unitary 2x2 polarization transform.

    Stored as a unit quaternion; ``matrix`` gives the Jones-space form and
    ``rotation_matrix`` the induced proper rotation of Stokes space.
    ``U @ V`` applies ``V`` first.
    """

    q: tuple

    @classmethod
    def identity(cls) -> PolUnitary:
        return cls((1.0, 0.0, 0.0, 0.0))

    @classmethod
    def from_quaternion(cls, q) -> PolUnitary:
        q = np.asarray(q, dtype=float)
        q = q / np.linalg.norm(q)
        return cls(tuple(float(c) for c in q))

    @classmethod
    def from_matrix(cls, u, tol: float = 1e-9) -> PolUnitary:
        """Accept any unitary; the global phase is removed so det = 1."""
        u = np.asarray(u, dtype=complex)
        if u.shape != (2, 2):
            raise ValidationError("unitary must be 2x2")
        if np.max(np.abs(u.conj().T @ u - np.eye(2))) > tol:
            raise ValidationError("matrix is not unitary")
        u = u / np.sqrt(np.linalg.det(u))
        return cls.from_quaternion(quat.from_su2(u))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> PolUnitary:
        a = np.asarray(axis.as_array() if isinstance(axis, StokesVector) else axis, dtype=float)
        return cls.from_quaternion(quat.from_axis_angle(a, angle))

    @property
    def quaternion(self) -> np.ndarray:
        return np.array(self.q)

    @property
    def matrix(self) -> np.ndarray:
        return quat.to_su2(self.quaternion)

    @property
    def u00(self) -> complex:
        return complex(self.matrix[0, 0])

    @property
    def u01(self) -> complex:
        return complex(self.matrix[0, 1])

    @property
    def u10(self) -> complex:
        return complex(self.matrix[1, 0])

    @property
    def u11(self) -> complex:
        return complex(self.matrix[1, 1])

    @property
    def rotation_matrix(self) -> np.ndarray:
        return quat.to_matrix(self.quaternion)

    @property
    def angle(self) -> float:
        """Rotation angle in [0, pi] on the Poincare sphere."""
        w = abs(self.q[0])
        return float(2.0 * np.arctan2(np.linalg.norm(self.q[1:]), w))

    @property
    def axis(self) -> StokesVector:
        v = np.array(self.q[1:])
        n = np.linalg.norm(v)
        if n < 1e-15:
            return H
        if self.q[0] < 0:
            v = -v
        return StokesVector.of(v / n)

    def __matmul__(self, other: PolUnitary) -> PolUnitary:
        return PolUnitary.from_quaternion(quat.qmul(self.quaternion, other.quaternion))

    def inverse(self) -> PolUnitary:
        return PolUnitary.from_quaternion(quat.qconj(self.quaternion))

    def apply(self, j: JonesVector) -> JonesVector:
        out = self.matrix @ j.as_array()
        return JonesVector(complex(out[0]), complex(out[1]))

    def rotate(self, s: StokesVector) -> StokesVector:
        return StokesVector.of(quat.rotate(self.quaternion, s.as_array()))

    def distance_from_identity(self) -> float:
        """Poincare-sphere rotation angle; 0 iff identity up to global phase."""
        return self.angle

    def equals(self, other: PolUnitary, tol: float = 1e-10) -> bool:
        """Equality up to global phase (sign of the quaternion)."""
        return bool(abs(abs(float(np.dot(self.q, other.q))) - 1.0) < tol)


def stokes_from_jones(j: JonesVector) -> StokesVector:
    j.check_normalized()
    c = np.conj(j.a0) * j.a1
    return StokesVector(float(abs(j.a0) ** 2 - abs(j.a1) ** 2), float(2.0 * c.real), float(2.0 * c.imag))


def sop_equal(j1: JonesVector, j2: JonesVector, tol: float = 1e-10) -> bool:
    """True when two Jones vectors describe the same SOP (any global phase)."""
    return fidelity(j1, j2) > 1.0 - tol


def _unit_axis(axis) -> np.ndarray:
    a = np.asarray(axis.as_array() if isinstance(axis, StokesVector) else axis, dtype=float)
    n = np.linalg.norm(a)
    if n < 1e-12:
        raise ValidationError("rotation axis has zero length")
    if abs(n - 1.0) > NORM_TOL:
        raise ValidationError(f"rotation axis not unit norm (|axis| = {n:.12g})")
    return a / n


def rotation_about(axis: StokesVector, angle: float) -> PolUnitary:
    return PolUnitary.from_quaternion(quat.from_axis_angle(_unit_axis(axis), angle))


def rotation_between(a: StokesVector, b: StokesVector, tie_break: StokesVector | None = None,
                     tol: float = 1e-12) -> PolUnitary:
    """Shortest rotation carrying SOP ``a`` onto ``b``.

    The axis is ``a x b`` and the angle ``arccos(a . b)``.  For antipodal
    inputs the axis is undefined: pass ``tie_break`` and the rotation is a
    half turn about its component perpendicular to ``a``.
    """
    va = _unit_axis(a)
    vb = _unit_axis(b)
    c = float(np.clip(va @ vb, -1.0, 1.0))
    cross = np.cross(va, vb)
    sn = np.linalg.norm(cross)
    if sn < tol:
        if c > 0:
            return PolUnitary.identity()
        if tie_break is None:
            raise AmbiguousAxisError("antipodal SOPs: rotation axis is ambiguous, supply tie_break")
        t = tie_break.as_array() if isinstance(tie_break, StokesVector) else np.asarray(tie_break, float)
        t = t - (t @ va) * va
        if np.linalg.norm(t) < 1e-9:
            raise AmbiguousAxisError("tie_break axis is parallel to the SOP")
        return rotation_about(t / np.linalg.norm(t), np.pi)
    return PolUnitary.from_quaternion(quat.from_axis_angle(cross / sn, np.arctan2(sn, c)))


def fidelity(j1: JonesVector, j2: JonesVector) -> float:
    j1.check_normalized()
    j2.check_normalized()
    return float(min(1.0, abs(np.conj(j1.a0) * j2.a0 + np.conj(j1.a1) * j2.a1) ** 2))


def stokes_fidelity(s1: StokesVector, s2: StokesVector) -> float:
    """``(1 + s1.s2)/2``: the Jones fidelity written on the sphere."""
    return 0.5 * (1.0 + s1.unit().dot(s2.unit()))


def qber_from_visibility(v: float) -> float:
    """Minimal QBER ``(1 - v) / 2``.

    Evaluated in decimal on the shortest repr of ``v`` so that decimal
    inputs give the decimal answer (0.972 -> 0.014, not 0.014000000000000012).
    """
    if not 0.0 <= v <= 1.0:
        raise ValidationError(f"visibility must lie in [0, 1], got {v}")
    return float((Decimal(1) - Decimal(repr(float(v)))) / 2)


def random_unitary(rng) -> PolUnitary:
    return PolUnitary.from_quaternion(quat.random_uniform(rng))


def random_stokes(rng) -> StokesVector:
    v = rng.standard_normal(3)
    return StokesVector.of(v / np.linalg.norm(v))


def pauli_rotation_matrix(u: np.ndarray) -> np.ndarray:
    """Stokes rotation induced by a Jones matrix, ``R_ij = Tr(s_i U s_j U^+)/2``.

    Computed directly from the Pauli matrices, independent of the quaternion
    path; used as a cross-check.
    """
    u = np.asarray(u, dtype=complex)
    r = np.empty((3, 3))
    for i, si in enumerate(_PAULI):
        for k, sk in enumerate(_PAULI):
            r[i, k] = 0.5 * np.trace(si @ u @ sk @ u.conj().T).real
    return r
