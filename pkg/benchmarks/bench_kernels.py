"""Benchmark of the compiled kernels against the pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--nodes 66049] [--actions 9]
                                       [--paths 2048] [--steps 5000]

Times the three hot paths (policy table construction, coefficient averaging,
Euler-Maruyama path blocks) for both backends and prints a speedup table.
"""

import argparse
import time

import numpy as np

from epia._kernels import py_backend

try:
    from epia._kernels import _speedups
except ImportError:
    _speedups = None


def timeit(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(nodes, actions, paths, steps):
    rng = np.random.default_rng(0)
    f = np.ascontiguousarray(rng.standard_normal((nodes, actions)) * 5.0)
    w = np.full(actions, 1.0 / actions)
    dens, _, _ = py_backend.policy_from_exponent(f, w)
    mat = np.ascontiguousarray(rng.standard_normal((nodes, actions, 2, 2)))

    n_grid = 257
    x = np.linspace(-2, 2, n_grid)
    running = np.ascontiguousarray(np.sin(x))
    bbar = np.ascontiguousarray(-0.5 * x)
    sbar = np.ascontiguousarray(1.5 + 0.1 * np.cos(x))
    normals = rng.standard_normal((steps, paths))

    cases = {
        "policy table": lambda mod: mod.policy_from_exponent(f, w),
        "matrix averaging": lambda mod: mod.averaged_matrix(dens, w, mat),
        "mc path block": lambda mod: mod.mc_block_1d(
            running, bbar, sbar, -2.0, x[1] - x[0], n_grid, 0.1, 1e-3, 2.0,
            normals,
        ),
    }
    print(f"{'kernel':<18}{'numpy (s)':>12}{'cython (s)':>12}{'speedup':>10}")
    for name, call in cases.items():
        t_py = timeit(lambda: call(py_backend))
        if _speedups is None:
            print(f"{name:<18}{t_py:>12.4f}{'n/a':>12}{'n/a':>10}")
            continue
        t_cy = timeit(lambda: call(_speedups))
        print(f"{name:<18}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=66049)
    parser.add_argument("--actions", type=int, default=9)
    parser.add_argument("--paths", type=int, default=2048)
    parser.add_argument("--steps", type=int, default=5000)
    args = parser.parse_args()
    bench(args.nodes, args.actions, args.paths, args.steps)
