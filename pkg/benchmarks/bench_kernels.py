"""Time the compiled and pure-Python kernels on identical inputs.

    python3 benchmarks/bench_kernels.py [--ticks N] [--repeat R]

Prints the best-of-R wall time per backend, the speedup, and whether the
two backends returned bit-identical arrays.  Also times one second of a
controlled scenario end to end under each backend.
"""

import argparse
import math
import os
import subprocess
import sys
import time

import numpy as np

from polstab import quat
from polstab.kernels import backends


def walk_inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    return (quat.random_uniform(rng), axis / np.linalg.norm(axis), rng.normal(0, 1e-13, 3),
            rng.standard_normal((n, 6)), 0.01, math.sqrt(1e-4 / 0.2), math.exp(-1e-4), 1e-15)


def loop_inputs(n, seed=0):
    n -= n % 2
    rng = np.random.default_rng(seed)
    f1 = quat.random_uniform(rng, n)
    f3 = quat.qmul(quat.from_axis_angle([0, 0, 1.0], 0.05), f1)
    v = [np.array(a) for a in ((1.0, 0, 0), (1.0, 0, 0), (0, 1.0, 0), (0, 1.0, 0))]
    return (rng.uniform(-3, 3, 6), 3 * math.pi, 0.043, 0.3, True, f1, f3, *v,
            rng.normal(0, 0.005, (n, 2)), rng.random((n // 2, 6)))


def best_of(fn, args, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    return all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(a, b))


def scenario_seconds(pure):
    code = ("import time; from polstab.engine import ScenarioConfig, run_scenario; "
            "c = ScenarioConfig(duration_s=1.0, drift_rate=3.0, scramble_frequency_hz=4.0, "
            "control_enabled=True); t = time.perf_counter(); run_scenario(c); "
            "print(time.perf_counter() - t)")
    env = dict(os.environ, POLSTAB_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ticks", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    impls = backends()
    if "cython" not in impls:
        print("compiled extension not built; only the Python backend is available")
    cases = {"fiber_walk": walk_inputs(args.ticks), "control_loop": loop_inputs(args.ticks)}
    print(f"{'kernel':<13} {'backend':<8} {'seconds':>9} {'ticks/s':>12}")
    for name, inputs in cases.items():
        results = {}
        for backend, mod in sorted(impls.items()):
            dt, out = best_of(getattr(mod, name), inputs, args.repeat)
            results[backend] = (dt, out)
            print(f"{name:<13} {backend:<8} {dt:>9.4f} {args.ticks / dt:>12.0f}")
        if len(results) == 2:
            (tc, oc), (tp, op) = results["cython"], results["python"]
            print(f"{name:<13} speedup {tp / tc:.1f}x, bit-identical: {same(oc, op)}")

    print("\none second of a controlled scenario (analytic mode):")
    print(f"  python  {scenario_seconds(True):.2f} s")
    if "cython" in impls:
        print(f"  cython  {scenario_seconds(False):.2f} s")


if __name__ == "__main__":
    main()
