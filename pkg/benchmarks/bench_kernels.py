"""Benchmark the numba kernels against the pure-numpy fallback.

Run twice to compare the two dispatch paths:

    python benchmarks/bench_kernels.py
    HELIOCAST_NO_NUMBA=1 python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from heliocast import _kernels as kern


def timeit(label, fn, repeats=3):
    fn()  # warm up (numba compilation)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    print(f"{label:32s} {min(times) * 1e3:10.2f} ms")


def main():
    mode = "numba" if kern.USE_NUMBA else "numpy"
    print(f"kernel path: {mode}")
    rng = np.random.default_rng(0)
    bmin = np.array([[-4.0, -10.0, 0.0], [3.0, -10.0, 0.0], [-1.0, 2.0, 0.0]])
    bmax = np.array([[-3.0, 10.0, 5.0], [4.0, 10.0, 5.0], [-0.5, 2.5, 0.6]])

    n = 200_000
    origins = np.column_stack(
        [rng.uniform(-3, 3, n), rng.uniform(-9, 9, n), rng.uniform(0.1, 3.0, n)]
    )
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    timeit(
        f"trace_rays      ({n} rays)",
        lambda: kern.trace_rays(origins, dirs, bmin, bmax),
    )
    timeit(
        f"rays_occluded   ({n} rays)",
        lambda: kern.rays_occluded(origins, dirs, bmin, bmax),
    )

    m, k = 5000, 5184
    pts = origins[:m]
    sun = rng.normal(size=(k, 3))
    sun[:, 2] = np.abs(sun[:, 2])
    sun /= np.linalg.norm(sun, axis=1, keepdims=True)
    timeit(
        f"visibility_matrix ({m}x{k})",
        lambda: kern.visibility_matrix(pts, sun, bmin, bmax),
        repeats=1,
    )

    p = 1500
    centers = origins[:p]
    normals = dirs[:p]
    areas = np.full(p, 0.01)
    timeit(
        f"form_factors    ({p} patches)",
        lambda: kern.form_factors(centers, normals, areas, bmin, bmax),
        repeats=1,
    )


if __name__ == "__main__":
    main()
