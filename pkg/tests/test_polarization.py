import math

import numpy as np
import pytest
from hypothesis import given

from polstab import quat
from polstab.errors import AmbiguousAxisError, ValidationError
from polstab.polarization import (
    D,
    H,
    R,
    JonesVector,
    PolUnitary,
    StokesVector,
    fidelity,
    pauli_rotation_matrix,
    qber_from_visibility,
    random_unitary,
    rotation_about,
    rotation_between,
    sop_equal,
    stokes_fidelity,
    stokes_from_jones,
)

from .strategies import jones_vectors, stokes_vectors, unitaries

S = 1 / math.sqrt(2)


def close(a, b, tol=1e-12):
    return np.allclose(np.asarray(a), np.asarray(b), atol=tol)


# --- Jones/Stokes conventions ----------------------------------------------

@pytest.mark.parametrize("amps, stokes", [
    ((1, 0), (1, 0, 0)),
    ((S, S), (0, 1, 0)),
    ((S, 1j * S), (0, 0, 1)),
    ((0, 1), (-1, 0, 0)),
    ((S, -S), (0, -1, 0)),
])
def test_stokes_convention(amps, stokes):
    s = stokes_from_jones(JonesVector(*amps))
    assert close(s.as_array(), stokes)


def test_stokes_rejects_unnormalized():
    with pytest.raises(ValidationError):
        stokes_from_jones(JonesVector(1.0, 1.0))


def test_sop_equal_ignores_global_phase():
    j = JonesVector(S, 1j * S)
    k = JonesVector(S * np.exp(0.7j), 1j * S * np.exp(0.7j))
    assert sop_equal(j, k)
    assert not sop_equal(j, JonesVector(S, -1j * S))


@given(jones_vectors())
def test_round_trip_jones_stokes(j):
    s = stokes_from_jones(j)
    assert abs(s.norm() - 1.0) < 1e-12
    back = stokes_from_jones(JonesVector.from_stokes(s))
    assert close(back.as_array(), s.as_array(), 1e-10)


@given(jones_vectors())
def test_orthogonal_states_are_antipodal(j):
    orth = JonesVector(-np.conj(j.a1), np.conj(j.a0))
    assert close(stokes_from_jones(orth).as_array(), -stokes_from_jones(j).as_array(), 1e-12)


# --- unitaries -------------------------------------------------------------

@given(unitaries())
def test_unitary_invariants(u):
    m = u.matrix
    assert close(m.conj().T @ m, np.eye(2))
    assert abs(np.linalg.det(m) - 1.0) < 1e-12
    assert abs(np.linalg.det(u.rotation_matrix) - 1.0) < 1e-10


@given(unitaries())
def test_rotation_matrix_matches_pauli_oracle(u):
    # independent route: R_ij = Tr(sigma_i U sigma_j U^dagger) / 2
    assert close(u.rotation_matrix, pauli_rotation_matrix(u.matrix), 1e-12)


def test_homomorphism_on_random_pairs(rng):
    for _ in range(1000):
        u, v = random_unitary(rng), random_unitary(rng)
        assert close((u @ v).rotation_matrix, u.rotation_matrix @ v.rotation_matrix, 1e-10)


def test_from_matrix_normalizes_phase():
    u = rotation_about(R, 0.3)
    v = PolUnitary.from_matrix(np.exp(0.4j) * u.matrix)
    assert v.equals(u)


def test_from_matrix_rejects_non_unitary():
    with pytest.raises(ValidationError):
        PolUnitary.from_matrix(np.array([[1, 1], [0, 1]], dtype=complex))


@given(unitaries(), jones_vectors(), jones_vectors())
def test_fidelity_unitary_invariance(u, j1, j2):
    assert abs(fidelity(u.apply(j1), u.apply(j2)) - fidelity(j1, j2)) < 1e-10


@given(unitaries(), jones_vectors())
def test_apply_and_rotate_agree(u, j):
    s = stokes_from_jones(u.apply(j))
    assert close(s.as_array(), u.rotate(stokes_from_jones(j)).as_array(), 1e-10)


# --- rotations -------------------------------------------------------------

def test_rotation_about_examples():
    assert rotation_about(R, 0.0).equals(PolUnitary.identity())
    assert close(rotation_about(R, math.pi / 2).rotate(H).as_array(), (0, 1, 0))
    assert close(rotation_about(H, math.pi).rotate(D).as_array(), (0, -1, 0))


def test_rotation_about_zero_axis():
    with pytest.raises(ValidationError):
        rotation_about(StokesVector(0, 0, 0), 1.0)


@given(stokes_vectors(), stokes_vectors())
def test_rotation_about_fixes_axis_and_matches_rodrigues(axis, s):
    theta = 0.9
    u = rotation_about(axis, theta)
    a, v = axis.as_array(), s.as_array()
    rodrigues = v * math.cos(theta) + np.cross(a, v) * math.sin(theta) + a * (a @ v) * (1 - math.cos(theta))
    assert close(u.rotate(s).as_array(), rodrigues, 1e-10)
    assert close(u.rotate(axis).as_array(), a, 1e-10)


def test_rotation_between_examples():
    assert rotation_between(H, H).equals(PolUnitary.identity())
    # hand oracle: axis (1,0,0) x (0,0,1) = (0,-1,0), angle arccos(0) = pi/2
    u = rotation_between(H, R)
    assert u.equals(rotation_about(StokesVector(0, -1, 0), math.pi / 2))
    with pytest.raises(AmbiguousAxisError):
        rotation_between(H, H.antipode())


def test_rotation_between_tie_break():
    u = rotation_between(H, H.antipode(), tie_break=R)
    assert close(u.rotate(H).as_array(), (-1, 0, 0), 1e-12)
    assert u.equals(rotation_about(R, math.pi))


def test_rotation_between_random_pairs(rng):
    for _ in range(1000):
        a = StokesVector.of(quat.rotate(quat.random_uniform(rng), [1.0, 0, 0]))
        b = StokesVector.of(quat.rotate(quat.random_uniform(rng), [1.0, 0, 0]))
        assert close(rotation_between(a, b).rotate(a).as_array(), b.as_array(), 1e-10)


# --- fidelity and visibility ------------------------------------------------

def test_fidelity_examples():
    h, v = JonesVector(1, 0), JonesVector(0, 1)
    assert fidelity(h, h) == pytest.approx(1.0)
    assert fidelity(h, v) == pytest.approx(0.0)
    assert fidelity(h, JonesVector(S, S)) == pytest.approx(0.5)


@given(stokes_vectors(), stokes_vectors())
def test_fidelity_stokes_identity(a, b):
    ja, jb = JonesVector.from_stokes(a), JonesVector.from_stokes(b)
    assert abs(fidelity(ja, jb) - stokes_fidelity(a, b)) < 1e-12


def test_qber_from_visibility():
    assert qber_from_visibility(0.972) == 0.014
    assert qber_from_visibility(1.0) == 0.0
    assert qber_from_visibility(0.0) == 0.5
    for bad in (-0.1, 1.1):
        with pytest.raises(ValidationError):
            qber_from_visibility(bad)


# --- quaternion helpers ----------------------------------------------------

def test_quaternion_matrix_round_trip(rng):
    for q in quat.random_uniform(rng, 200):
        back = quat.from_matrix(quat.to_matrix(q))
        assert close(back * np.sign(back @ q), q, 1e-10)


def test_su2_round_trip(rng):
    q = quat.random_uniform(rng, 50)
    back = quat.from_su2(quat.to_su2(q))
    sign = np.sign(np.sum(back * q, axis=-1))[:, None]
    assert close(back * sign, q, 1e-12)
