"""Backend dispatch for the numeric hot paths.

Two implementations exist for each kernel: a numba-compiled one and a pure
numpy one. The numba backend is used when importable; setting the
environment variable ``SCENE_ALIGN_PURE_NUMPY=1`` forces the numpy path.
Individual calls can also pass ``backend="numpy"`` / ``"numba"`` explicitly
(used by the tests and the benchmark).
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_numpy

_selected: str | None = None


def default_backend() -> str:
    """Resolve the backend once: env override, then numba availability."""
    global _selected
    if _selected is None:
        if os.environ.get("SCENE_ALIGN_PURE_NUMPY", "") not in ("", "0"):
            _selected = "numpy"
        else:
            try:
                from . import _kernels_numba  # noqa: F401

                _selected = "numba"
            except ImportError:
                _selected = "numpy"
    return _selected


def _module(backend: str | None):
    name = backend or default_backend()
    if name == "numpy":
        return _kernels_numpy
    if name == "numba":
        from . import _kernels_numba

        return _kernels_numba
    raise ValueError(f"unknown kernel backend: {name!r}")


def rasterize(
    tris_cam: np.ndarray,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    width: int,
    height: int,
    z_near: float = 1e-4,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Z-buffer rasterize camera-frame triangles (t, 3, 3).

    Pixel (u, v) is covered when the integer sample point lies inside the
    projected triangle (top-left rule on edge ties); depth is
    perspective-correct (1/z interpolation). Triangles are clipped against
    z >= z_near. Returns (depth (h, w) with +inf where empty, triangle index
    (h, w) int32 with -1 where empty).
    """
    tris = np.ascontiguousarray(tris_cam, dtype=np.float64)
    if tris.ndim != 3 or tris.shape[1:] != (3, 3):
        raise ValueError("triangles must have shape (t, 3, 3)")
    return _module(backend).rasterize(tris, float(fx), float(fy), float(cx), float(cy), int(width), int(height), float(z_near))


def plane_normals(
    points: np.ndarray,
    valid: np.ndarray,
    radius: int,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares plane normal per pixel over a (2r+1)^2 window.

    ``points`` is the (h, w, 3) camera-frame point grid, ``valid`` its mask.
    Normals are unit, oriented toward the camera; pixels with < 3 valid
    neighbors or a rank-deficient neighborhood are invalid.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    msk = np.ascontiguousarray(valid, dtype=bool)
    if pts.ndim != 3 or pts.shape[2] != 3 or pts.shape[:2] != msk.shape:
        raise ValueError("points must be (h, w, 3) matching the mask")
    return _module(backend).plane_normals(pts, msk, int(radius))
