"""Both kernel backends must produce the same numbers."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from polstab import _kernels_py, kernels, quat

BACKENDS = kernels.backends()
needs_ext = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def _walk_inputs(seed, n=3000):
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    return (quat.random_uniform(rng), axis / np.linalg.norm(axis), rng.normal(0, 1e-13, 3),
            rng.standard_normal((n, 6)), 0.01, math.sqrt(1e-4 / 0.2), math.exp(-1e-4), 1e-15)


def _loop_inputs(seed, n=4000):
    rng = np.random.default_rng(seed)
    f1 = quat.random_uniform(rng, n)
    f3 = quat.qmul(quat.from_axis_angle([0, 0, 1.0], 0.05), f1)
    v = [np.array(a) for a in ((1.0, 0, 0), (1.0, 0, 0), (0, 1.0, 0), (0, 1.0, 0))]
    return (rng.uniform(-3, 3, 6), 3 * math.pi, 0.043, 0.3, True, f1, f3, *v,
            rng.normal(0, 0.005, (n, 2)), rng.random((n // 2, 6)))


def test_backend_selection_names():
    assert kernels.BACKEND in BACKENDS
    assert "python" in BACKENDS


def test_env_var_forces_python():
    code = "from polstab import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, POLSTAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"


@needs_ext
@pytest.mark.parametrize("seed", range(5))
def test_fiber_walk_equivalent(seed):
    a = BACKENDS["cython"].fiber_walk(*_walk_inputs(seed))
    b = _kernels_py.fiber_walk(*_walk_inputs(seed))
    # same libm calls in the same order: results agree to the bit
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert tuple(a[2]) == tuple(b[2])


@needs_ext
@pytest.mark.parametrize("seed", range(5))
def test_control_loop_equivalent(seed):
    a = BACKENDS["cython"].control_loop(*_loop_inputs(seed))
    b = _kernels_py.control_loop(*_loop_inputs(seed))
    for u, v in zip(a[:3], b[:3]):
        assert np.array_equal(u, v)
    assert a[3:] == b[3:]


@pytest.mark.parametrize("impl", sorted(BACKENDS))
def test_odd_tick_count_rejected(impl):
    args = list(_loop_inputs(0, 4))
    args[5] = args[5][:3]
    args[6] = args[6][:3]
    with pytest.raises(ValueError):
        BACKENDS[impl].control_loop(*args)


@pytest.mark.parametrize("impl", sorted(BACKENDS))
def test_disabled_loop_holds_stack(impl):
    args = list(_loop_inputs(1, 20))
    args[4] = False
    stack_q, _, x, resets, unwraps = BACKENDS[impl].control_loop(*args)
    assert np.array_equal(x, args[0])
    assert np.allclose(stack_q, stack_q[0]) and resets == unwraps == 0
