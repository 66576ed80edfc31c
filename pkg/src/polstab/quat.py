"""Vectorised unit-quaternion helpers.

A unit quaternion ``q = (w, x, y, z)`` stands for the SU(2) matrix
``w*I - i*(x*Z + y*X + z*Y)`` where ``(Z, X, Y)`` are the Pauli matrices
paired with the Stokes axes ``(s1, s2, s3)``.  That triple is a cyclic
permutation of the usual one, so the Hamilton product composes the matrices
and the standard quaternion rotation formula gives the Stokes-space action.

All functions broadcast over leading axes; the last axis has length 4
(quaternions) or 3 (Stokes vectors).
"""

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def qmul(a, b):
    """Hamilton product ``a * b`` (apply ``b`` first, then ``a``)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def qconj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qnormalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def from_axis_angle(axis, angle):
    """Quaternion for a right-handed rotation by ``angle`` about unit ``axis``."""
    axis = np.asarray(axis, dtype=float)
    half = 0.5 * np.asarray(angle, dtype=float)
    s = np.sin(half)[..., None]
    return np.concatenate([np.cos(half)[..., None], s * axis], axis=-1)


def from_rotation_vector(v):
    """Quaternion for the rotation vector ``v`` (axis * angle)."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v, axis=-1)
    safe = np.where(angle > 0.0, angle, 1.0)
    axis = v / safe[..., None]
    return from_axis_angle(axis, angle)


def rotate(q, v):
    """Rotate Stokes vector(s) ``v`` by quaternion(s) ``q``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def to_matrix(q):
    """3x3 rotation matrix of the Stokes-space action."""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


def from_matrix(r):
    """Quaternion (w >= 0) from a single 3x3 proper rotation matrix."""
    r = np.asarray(r, dtype=float)
    tr = np.trace(r)
    if tr > 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def to_su2(q):
    """2x2 complex matrix (or stack of them) for quaternion(s) ``q``."""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=float), -1, 0)
    return np.stack(
        [
            np.stack([w - 1j * x, -z - 1j * y], -1),
            np.stack([z - 1j * y, w + 1j * x], -1),
        ],
        axis=-2,
    )


def from_su2(u):
    """Inverse of :func:`to_su2` for a special-unitary matrix."""
    u = np.asarray(u, dtype=complex)
    return np.stack(
        [u[..., 0, 0].real, -u[..., 0, 0].imag, -u[..., 0, 1].imag, -u[..., 0, 1].real],
        axis=-1,
    )


def random_uniform(rng, size=None):
    """Haar-uniform unit quaternions."""
    shape = (4,) if size is None else (size, 4)
    q = rng.standard_normal(shape)
    return qnormalize(q)
