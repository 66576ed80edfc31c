"""Pure-Python reference implementation of the hot loops.

Mirrors ``_kernels.pyx`` operation for operation so both backends give the
same numbers; used when the extension is not built or when
``POLSTAB_PURE_PYTHON=1``.
"""

import math

import numpy as np

# plate k turns about s1 when k is even, s2 when odd


def _qmul(a0, a1, a2, a3, b0, b1, b2, b3):
    return (
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    )


def _rotate(w, x, y, z, v0, v1, v2):
    t0 = 2.0 * (y * v2 - z * v1)
    t1 = 2.0 * (z * v0 - x * v2)
    t2 = 2.0 * (x * v1 - y * v0)
    return (
        v0 + w * t0 + (y * t2 - z * t1),
        v1 + w * t1 + (z * t0 - x * t2),
        v2 + w * t2 + (x * t1 - y * t0),
    )


def _stack(x):
    w, qx, qy, qz = 1.0, 0.0, 0.0, 0.0
    for k in range(6):
        h = 0.5 * x[k]
        c = math.cos(h)
        s = math.sin(h)
        if k % 2 == 0:
            w, qx, qy, qz = _qmul(c, s, 0.0, 0.0, w, qx, qy, qz)
        else:
            w, qx, qy, qz = _qmul(c, 0.0, s, 0.0, w, qx, qy, qz)
    return w, qx, qy, qz


def _intensity(sq, a, launch, analyzer, noise):
    w, x, y, z = _qmul(sq[0], sq[1], sq[2], sq[3], a[0], a[1], a[2], a[3])
    o0, o1, o2 = _rotate(w, x, y, z, launch[0], launch[1], launch[2])
    i = 0.5 * (1.0 + o0 * analyzer[0] + o1 * analyzer[1] + o2 * analyzer[2]) + noise
    if i < 0.0:
        return 0.0
    if i > 1.0:
        return 1.0
    return i


def fiber_walk(q0, axis0, pmd0, noise, drift_angle, axis_step, rho, pmd_step):
    n = noise.shape[0]
    q_out = np.empty((n, 4))
    pmd_out = np.empty((n, 3))
    w, x, y, z = (float(v) for v in q0)
    a0, a1, a2 = (float(v) for v in axis0)
    p0, p1, p2 = (float(v) for v in pmd0)
    ch = math.cos(0.5 * drift_angle)
    sh = math.sin(0.5 * drift_angle)
    nz = noise.tolist()
    for k in range(n):
        e = nz[k]
        if drift_angle != 0.0:
            a0 += axis_step * e[0]
            a1 += axis_step * e[1]
            a2 += axis_step * e[2]
            na = math.sqrt(a0 * a0 + a1 * a1 + a2 * a2)
            a0 /= na
            a1 /= na
            a2 /= na
            w, x, y, z = _qmul(ch, sh * a0, sh * a1, sh * a2, w, x, y, z)
            nq = math.sqrt(w * w + x * x + y * y + z * z)
            w /= nq
            x /= nq
            y /= nq
            z /= nq
        p0 = rho * p0 + pmd_step * e[3]
        p1 = rho * p1 + pmd_step * e[4]
        p2 = rho * p2 + pmd_step * e[5]
        q_out[k, 0] = w
        q_out[k, 1] = x
        q_out[k, 2] = y
        q_out[k, 3] = z
        pmd_out[k, 0] = p0
        pmd_out[k, 1] = p1
        pmd_out[k, 2] = p2
    return q_out, pmd_out, (a0, a1, a2)


def control_loop(x0, phi_max, dither, gain, enabled, fiber1, fiber3,
                 launch1, analyzer1, launch3, analyzer3, noise, sign_u):
    """Run ``n`` probe ticks (``n`` even, two per SPSA iteration).

    Returns the stack quaternion in force during each tick, the measured
    objective of each tick, the final retardances and the numbers of hard
    resets and 2*pi unwinds.
    """
    n = fiber1.shape[0]
    if n % 2:
        raise ValueError("control_loop needs an even number of ticks")
    x = [float(v) for v in x0]
    stack_out = np.empty((n, 4))
    obj_out = np.empty(n)
    f1 = fiber1.tolist()
    f3 = fiber3.tolist()
    nz = noise.tolist()
    su = sign_u.tolist()
    l1 = [float(v) for v in launch1]
    m1 = [float(v) for v in analyzer1]
    l3 = [float(v) for v in launch3]
    m3 = [float(v) for v in analyzer3]
    resets = 0
    unwraps = 0
    trial = [0.0] * 6
    delta = [0.0] * 6
    sq = _stack(x)
    for it in range(n // 2):
        if enabled:
            for k in range(6):
                delta[k] = -1.0 if su[it][k] < 0.5 else 1.0
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
                sq = _stack(trial)
            i1 = _intensity(sq, f1[tick], l1, m1, nz[tick][0])
            i3 = _intensity(sq, f3[tick], l3, m3, nz[tick][1])
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
                    if abs(v) < phi_max - dither:
                        saturated = False
                if saturated:
                    ok = True
                    for k in range(6):
                        if abs(x[k]) >= phi_max - dither:
                            v = x[k] - 2.0 * math.pi if x[k] > 0 else x[k] + 2.0 * math.pi
                            trial[k] = v
                        else:
                            trial[k] = x[k]
                        if abs(trial[k]) > phi_max - dither:
                            ok = False
                    if ok:
                        for k in range(6):
                            x[k] = trial[k]
                        unwraps += 1
                    else:
                        for k in range(6):
                            x[k] = 0.0
                        resets += 1
    return stack_out, obj_out, np.array(x), resets, unwraps
