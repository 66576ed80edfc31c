# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; see ``_kernels_py`` for the reference twin."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, fabs

cnp.import_array()

cdef double TWO_PI = 6.283185307179586


cdef inline void _qmul(double a0, double a1, double a2, double a3,
                       double b0, double b1, double b2, double b3, double* out) noexcept nogil:
    out[0] = a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3
    out[1] = a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2
    out[2] = a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1
    out[3] = a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0


cdef inline void _stack(double* x, double* q) noexcept nogil:
    cdef double tmp[4]
    cdef double h, c, s
    cdef int k
    q[0] = 1.0
    q[1] = 0.0
    q[2] = 0.0
    q[3] = 0.0
    for k in range(6):
        h = 0.5 * x[k]
        c = cos(h)
        s = sin(h)
        if k % 2 == 0:
            _qmul(c, s, 0.0, 0.0, q[0], q[1], q[2], q[3], tmp)
        else:
            _qmul(c, 0.0, s, 0.0, q[0], q[1], q[2], q[3], tmp)
        q[0] = tmp[0]
        q[1] = tmp[1]
        q[2] = tmp[2]
        q[3] = tmp[3]


cdef inline double _intensity(double* sq, double[:, ::1] f, Py_ssize_t tick,
                              double* launch, double* analyzer, double noise) noexcept nogil:
    cdef double q[4]
    cdef double w, x, y, z, t0, t1, t2, o0, o1, o2, i
    _qmul(sq[0], sq[1], sq[2], sq[3], f[tick, 0], f[tick, 1], f[tick, 2], f[tick, 3], q)
    w = q[0]
    x = q[1]
    y = q[2]
    z = q[3]
    t0 = 2.0 * (y * launch[2] - z * launch[1])
    t1 = 2.0 * (z * launch[0] - x * launch[2])
    t2 = 2.0 * (x * launch[1] - y * launch[0])
    o0 = launch[0] + w * t0 + (y * t2 - z * t1)
    o1 = launch[1] + w * t1 + (z * t0 - x * t2)
    o2 = launch[2] + w * t2 + (x * t1 - y * t0)
    i = 0.5 * (1.0 + o0 * analyzer[0] + o1 * analyzer[1] + o2 * analyzer[2]) + noise
    if i < 0.0:
        return 0.0
    if i > 1.0:
        return 1.0
    return i


def fiber_walk(q0, axis0, pmd0, noise, double drift_angle, double axis_step,
               double rho, double pmd_step):
    cdef double[:, ::1] nz = np.ascontiguousarray(noise, dtype=np.float64)
    cdef Py_ssize_t n = nz.shape[0]
    q_arr = np.empty((n, 4))
    pmd_arr = np.empty((n, 3))
    cdef double[:, ::1] q_out = q_arr
    cdef double[:, ::1] pmd_out = pmd_arr
    cdef double w = q0[0], x = q0[1], y = q0[2], z = q0[3]
    cdef double a0 = axis0[0], a1 = axis0[1], a2 = axis0[2]
    cdef double p0 = pmd0[0], p1 = pmd0[1], p2 = pmd0[2]
    cdef double ch = cos(0.5 * drift_angle)
    cdef double sh = sin(0.5 * drift_angle)
    cdef double na, nq
    cdef double t[4]
    cdef Py_ssize_t k
    with nogil:
        for k in range(n):
            if drift_angle != 0.0:
                a0 += axis_step * nz[k, 0]
                a1 += axis_step * nz[k, 1]
                a2 += axis_step * nz[k, 2]
                na = sqrt(a0 * a0 + a1 * a1 + a2 * a2)
                a0 /= na
                a1 /= na
                a2 /= na
                _qmul(ch, sh * a0, sh * a1, sh * a2, w, x, y, z, t)
                w = t[0]
                x = t[1]
                y = t[2]
                z = t[3]
                nq = sqrt(w * w + x * x + y * y + z * z)
                w /= nq
                x /= nq
                y /= nq
                z /= nq
            p0 = rho * p0 + pmd_step * nz[k, 3]
            p1 = rho * p1 + pmd_step * nz[k, 4]
            p2 = rho * p2 + pmd_step * nz[k, 5]
            q_out[k, 0] = w
            q_out[k, 1] = x
            q_out[k, 2] = y
            q_out[k, 3] = z
            pmd_out[k, 0] = p0
            pmd_out[k, 1] = p1
            pmd_out[k, 2] = p2
    return q_arr, pmd_arr, (a0, a1, a2)


def control_loop(x0, double phi_max, double dither, double gain, bint enabled,
                 fiber1, fiber3, launch1, analyzer1, launch3, analyzer3, noise, sign_u):
    cdef double[:, ::1] f1 = np.ascontiguousarray(fiber1, dtype=np.float64)
    cdef double[:, ::1] f3 = np.ascontiguousarray(fiber3, dtype=np.float64)
    cdef double[:, ::1] nz = np.ascontiguousarray(noise, dtype=np.float64)
    cdef double[:, ::1] su = np.ascontiguousarray(sign_u, dtype=np.float64)
    cdef Py_ssize_t n = f1.shape[0]
    if n % 2:
        raise ValueError("control_loop needs an even number of ticks")
    stack_arr = np.empty((n, 4))
    obj_arr = np.empty(n)
    cdef double[:, ::1] stack_out = stack_arr
    cdef double[::1] obj_out = obj_arr
    cdef double x[6]
    cdef double trial[6]
    cdef double delta[6]
    cdef double sq[4]
    cdef double l1[3]
    cdef double m1[3]
    cdef double l3[3]
    cdef double m3[3]
    cdef int k, half
    cdef Py_ssize_t it, tick
    cdef double jp = 0.0, j, i1, i3, g, v, sgn
    cdef long resets = 0, unwraps = 0
    cdef bint saturated, ok
    for k in range(6):
        x[k] = x0[k]
        trial[k] = 0.0
        delta[k] = 0.0
    for k in range(3):
        l1[k] = launch1[k]
        m1[k] = analyzer1[k]
        l3[k] = launch3[k]
        m3[k] = analyzer3[k]
    _stack(x, sq)
    with nogil:
        for it in range(n // 2):
            if enabled:
                for k in range(6):
                    delta[k] = -1.0 if su[it, k] < 0.5 else 1.0
            jp = 0.0
            for half in range(2):
                tick = 2 * it + half
                if enabled:
                    sgn = dither if half == 0 else -dither
                    for k in range(6):
                        v = x[k] + sgn * delta[k]
                        if v > phi_max:
                            v = phi_max
                        elif v < -phi_max:
                            v = -phi_max
                        trial[k] = v
                    _stack(trial, sq)
                i1 = _intensity(sq, f1, tick, l1, m1, nz[tick, 0])
                i3 = _intensity(sq, f3, tick, l3, m3, nz[tick, 1])
                j = i1 + i3
                obj_out[tick] = j
                stack_out[tick, 0] = sq[0]
                stack_out[tick, 1] = sq[1]
                stack_out[tick, 2] = sq[2]
                stack_out[tick, 3] = sq[3]
                if half == 0:
                    jp = j
                elif enabled:
                    g = gain * (jp - j) / (2.0 * dither)
                    saturated = True
                    for k in range(6):
                        v = x[k] + g * delta[k]
                        if v > phi_max:
                            v = phi_max
                        elif v < -phi_max:
                            v = -phi_max
                        x[k] = v
                        if fabs(v) < phi_max - dither:
                            saturated = False
                    if saturated:
                        ok = True
                        for k in range(6):
                            if fabs(x[k]) >= phi_max - dither:
                                trial[k] = x[k] - TWO_PI if x[k] > 0 else x[k] + TWO_PI
                            else:
                                trial[k] = x[k]
                            if fabs(trial[k]) > phi_max - dither:
                                ok = False
                        if ok:
                            for k in range(6):
                                x[k] = trial[k]
                            unwraps += 1
                        else:
                            for k in range(6):
                                x[k] = 0.0
                            resets += 1
    return stack_arr, obj_arr, np.array([x[0], x[1], x[2], x[3], x[4], x[5]]), resets, unwraps
