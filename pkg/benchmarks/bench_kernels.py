#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the pure-NumPy fallback.

Times each hot kernel on representative workloads, then an end-to-end
RANSAC solve per backend. Run from the repository root:

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from scalepose import _kernels as kernels
from scalepose.geometry import CameraIntrinsics, project, random_rotation
from scalepose.pnp import RansacConfig, ransac_pnp

CAMERA = CameraIntrinsics(577.5, 577.5, 319.5, 239.5)


def timeit(fn, repeats):
    fn()  # warmup
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_quartic(backend):
    rng = np.random.default_rng(0)
    coeffs = rng.normal(size=(2000, 5))

    def run():
        for c in coeffs:
            backend.quartic_roots(*c)

    return run


def bench_p3p(backend):
    rng = np.random.default_rng(1)
    instances = []
    for _ in range(1000):
        pts = rng.normal(size=(3, 3))
        pts[:, 2] = np.abs(pts[:, 2]) + 1.2
        bearings = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        instances.append((pts, bearings))

    def run():
        for pts, bearings in instances:
            backend.p3p_distance_sets(pts, bearings)

    return run


def _pose_workload(n_points):
    rng = np.random.default_rng(2)
    rot = random_rotation(rng)
    t = np.array([0.05, -0.02, 1.4])
    obj = rng.uniform(-0.15, 0.15, size=(n_points, 3))
    pix = project(obj @ rot.T + t, CAMERA)
    return rot, t, obj, pix


def bench_reprojection(backend):
    rot, t, obj, pix = _pose_workload(200)

    def run():
        for _ in range(2000):
            backend.reprojection_errors(rot, t, obj, pix, CAMERA.fx, CAMERA.fy, CAMERA.cx, CAMERA.cy)

    return run


def bench_normal_eqs(backend):
    rot, t, obj, pix = _pose_workload(200)

    def run():
        for _ in range(1000):
            backend.reprojection_normal_eqs(rot, t, obj, pix, CAMERA.fx, CAMERA.fy, CAMERA.cx, CAMERA.cy)

    return run


def bench_points_in_box(backend):
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1.0, 1.0, size=(1_000_000, 3))
    rot = random_rotation(rng)
    t = np.zeros(3)
    he = np.array([0.4, 0.5, 0.6])

    def run():
        backend.points_in_box_mask(pts, rot, t, he)

    return run


def bench_ransac_end_to_end():
    rng = np.random.default_rng(4)
    rot, t, obj, pix = _pose_workload(120)
    noisy = pix + rng.normal(0, 0.5, pix.shape)
    idx = rng.choice(120, 36, replace=False)
    noisy[idx] = rng.uniform([0, 0], [640, 480], size=(36, 2))
    cfg = RansacConfig(reprojection_threshold=2.0, rng_seed=0)

    def run():
        ransac_pnp(noisy, obj, CAMERA, cfg)

    return run


KERNEL_BENCHES = [
    ("quartic_roots x2000", bench_quartic),
    ("p3p_distance_sets x1000", bench_p3p),
    ("reprojection_errors 200pt x2000", bench_reprojection),
    ("reprojection_normal_eqs 200pt x1000", bench_normal_eqs),
    ("points_in_box_mask 1e6 pts", bench_points_in_box),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"available backends: {', '.join(backends)} (active: {kernels.backend_name()})")
    if "native" not in backends:
        print("native backend not built; timing the pure backend only")

    from scalepose._kernels import _pure

    native = None
    if "native" in backends:
        from scalepose._kernels import _native as native

    width = max(len(name) for name, _ in KERNEL_BENCHES) + 2
    header = f"{'kernel':<{width}}{'pure':>10}"
    if native:
        header += f"{'native':>10}{'speedup':>9}"
    print()
    print(header)
    print("-" * len(header))
    for name, make in KERNEL_BENCHES:
        t_pure = timeit(make(_pure), args.repeats)
        line = f"{name:<{width}}{1e3 * t_pure:>8.1f}ms"
        if native:
            t_native = timeit(make(native), args.repeats)
            line += f"{1e3 * t_native:>8.1f}ms{t_pure / t_native:>8.1f}x"
        print(line)

    print()
    run = bench_ransac_end_to_end()
    original = kernels.backend_name()
    try:
        kernels.use_backend("pure")
        t_pure = timeit(run, args.repeats)
        line = f"{'ransac_pnp 120pt 30% outliers':<{width}}{1e3 * t_pure:>8.1f}ms"
        if native:
            kernels.use_backend("native")
            t_native = timeit(run, args.repeats)
            line += f"{1e3 * t_native:>8.1f}ms{t_pure / t_native:>8.1f}x"
        print(line)
    finally:
        kernels.use_backend(original)


if __name__ == "__main__":
    main()
