#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Covers the two hot paths:
- triangle rasterization (z-buffer depth render)
- windowed least-squares plane normals

Run:  python3 benchmarks/bench_kernels.py
The numpy path is also what you get under SCENE_ALIGN_PURE_NUMPY=1.
"""

import time

import numpy as np

from scene_align import kernels
from scene_align.geometry import CameraIntrinsics, DepthImage, GeocentricFrame, backproject_grid
from scene_align.mesh import chair_mesh
from scene_align.render import Placement, render


def time_fn(fn, n_warmup, n_runs):
    for _ in range(n_warmup):
        fn()
    t0 = time.perf_counter()
    for _ in range(n_runs):
        fn()
    return (time.perf_counter() - t0) / n_runs


def bench_rasterize(width, height, n_runs=20):
    print(f"\n=== rasterize: chair mesh at {width}x{height} ===")
    frame = GeocentricFrame(gravity=(0.0, -np.cos(0.5), -np.sin(0.5)), floor_height=-1.5)
    cam = CameraIntrinsics(fx=width * 1.25, fy=width * 1.25, cx=width / 2, cy=height / 2,
                           width=width, height=height)
    mesh = chair_mesh()
    t = frame.to_world(np.array([[0.0, 0.0, 2.4]]))[0]
    t[1] = frame.floor_height
    world = Placement(1.0, 0.7, t).apply(mesh.vertices)
    tris = frame.to_camera(world)[mesh.triangles]
    args = (tris, cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height)

    results = {}
    for backend in ("numba", "numpy"):
        dt = time_fn(lambda: kernels.rasterize(*args, backend=backend), n_warmup=3, n_runs=n_runs)
        results[backend] = dt
        print(f"  {backend:6s}: {dt * 1000:8.2f} ms/render ({mesh.n_triangles} triangles)")
    print(f"  speedup: {results['numpy'] / results['numba']:.1f}x")

    d_np, t_np = kernels.rasterize(*args, backend="numpy")
    d_nb, t_nb = kernels.rasterize(*args, backend="numba")
    agree = np.array_equal(t_np, t_nb) and np.allclose(d_np, d_nb, atol=1e-12)
    print(f"  backends agree: {agree}")


def bench_plane_normals(width, height, radius=3, n_runs=5):
    print(f"\n=== plane normals: {width}x{height}, window radius {radius} ===")
    frame = GeocentricFrame(gravity=(0.0, -np.cos(0.5), -np.sin(0.5)), floor_height=-1.5)
    cam = CameraIntrinsics(fx=width * 1.25, fy=width * 1.25, cx=width / 2, cy=height / 2,
                           width=width, height=height)
    mesh = chair_mesh()
    t = frame.to_world(np.array([[0.0, 0.0, 2.0]]))[0]
    t[1] = frame.floor_height
    out = render(mesh, Placement(1.0, 0.7, t), frame, cam)
    depth = DepthImage(np.where(out.mask, out.depth.values, 0.0), out.mask)
    pts = backproject_grid(depth, cam)

    results = {}
    for backend in ("numba", "numpy"):
        dt = time_fn(lambda: kernels.plane_normals(pts, depth.valid, radius, backend=backend),
                     n_warmup=2, n_runs=n_runs)
        results[backend] = dt
        print(f"  {backend:6s}: {dt * 1000:8.2f} ms/image ({int(depth.valid.sum())} valid px)")
    print(f"  speedup: {results['numpy'] / results['numba']:.1f}x")

    n_np, v_np = kernels.plane_normals(pts, depth.valid, radius, backend="numpy")
    n_nb, v_nb = kernels.plane_normals(pts, depth.valid, radius, backend="numba")
    agree = np.array_equal(v_np, v_nb) and np.allclose(n_np, n_nb, atol=1e-8)
    print(f"  backends agree: {agree}")


if __name__ == "__main__":
    print("scene_align kernel benchmark (first numba call includes JIT compilation)")
    for w, h in ((160, 120), (320, 240), (640, 480)):
        bench_rasterize(w, h)
    for w, h in ((160, 120), (320, 240)):
        bench_plane_normals(w, h)
