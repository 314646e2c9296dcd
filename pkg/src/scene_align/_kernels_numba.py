"""Numba-compiled twins of the hot kernels.

Same math as ``_kernels_numpy``; kept in lockstep so the two backends agree
to floating-point noise (covered by tests/test_kernels.py).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_RANK_TOL = 1e-9


@njit(cache=True)
def _raster_tri(v0, v1, v2, t_index, fx, fy, cx, cy, width, height, depth, tri_id):
    x0 = fx * v0[0] / v0[2] + cx
    y0 = fy * v0[1] / v0[2] + cy
    w0 = 1.0 / v0[2]
    x1 = fx * v1[0] / v1[2] + cx
    y1 = fy * v1[1] / v1[2] + cy
    w1 = 1.0 / v1[2]
    x2 = fx * v2[0] / v2[2] + cx
    y2 = fy * v2[1] / v2[2] + cy
    w2 = 1.0 / v2[2]

    area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    if area2 == 0.0:
        return
    if area2 < 0.0:
        tx, ty, tw = x1, y1, w1
        x1, y1, w1 = x2, y2, w2
        x2, y2, w2 = tx, ty, tw
        area2 = -area2

    ix0 = max(0, int(np.ceil(min(x0, min(x1, x2)))))
    ix1 = min(width - 1, int(np.floor(max(x0, max(x1, x2)))))
    iy0 = max(0, int(np.ceil(min(y0, min(y1, y2)))))
    iy1 = min(height - 1, int(np.floor(max(y0, max(y1, y2)))))
    if ix0 > ix1 or iy0 > iy1:
        return

    tl0 = _top_left(x1, y1, x2, y2)
    tl1 = _top_left(x2, y2, x0, y0)
    tl2 = _top_left(x0, y0, x1, y1)

    for py in range(iy0, iy1 + 1):
        fpy = float(py)
        for px in range(ix0, ix1 + 1):
            fpx = float(px)
            e0 = (x2 - x1) * (fpy - y1) - (y2 - y1) * (fpx - x1)
            e1 = (x0 - x2) * (fpy - y2) - (y0 - y2) * (fpx - x2)
            e2 = (x1 - x0) * (fpy - y0) - (y1 - y0) * (fpx - x0)
            if not (e0 > 0 or (e0 == 0 and tl0)):
                continue
            if not (e1 > 0 or (e1 == 0 and tl1)):
                continue
            if not (e2 > 0 or (e2 == 0 and tl2)):
                continue
            inv_z = (e0 * w0 + e1 * w1 + e2 * w2) / area2
            if inv_z <= 0:
                continue
            z = 1.0 / inv_z
            if z < depth[py, px]:
                depth[py, px] = z
                tri_id[py, px] = t_index


@njit(cache=True)
def _top_left(ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    return (dy == 0 and dx > 0) or dy < 0


@njit(cache=True)
def _rasterize_impl(tris, fx, fy, cx, cy, width, height, z_near):
    depth = np.full((height, width), np.inf)
    tri_id = np.full((height, width), -1, dtype=np.int32)
    poly = np.empty((4, 3))
    for t in range(tris.shape[0]):
        n_out = 0
        for i in range(3):
            a = tris[t, i]
            b = tris[t, (i + 1) % 3]
            da = a[2] - z_near
            db = b[2] - z_near
            if da >= 0.0:
                poly[n_out, 0] = a[0]
                poly[n_out, 1] = a[1]
                poly[n_out, 2] = a[2]
                n_out += 1
            if (da >= 0.0) != (db >= 0.0):
                s = da / (da - db)
                for c in range(3):
                    poly[n_out, c] = a[c] + s * (b[c] - a[c])
                n_out += 1
        for f in range(1, n_out - 1):
            _raster_tri(poly[0], poly[f], poly[f + 1], t, fx, fy, cx, cy, width, height, depth, tri_id)
    return depth, tri_id


def rasterize(tris, fx, fy, cx, cy, width, height, z_near):
    return _rasterize_impl(tris, fx, fy, cx, cy, width, height, z_near)


@njit(cache=True)
def _plane_normals_impl(points, valid, radius):
    h, w, _ = points.shape
    normals = np.zeros((h, w, 3))
    out_valid = np.zeros((h, w), dtype=np.bool_)
    cov = np.empty((3, 3))
    for i in range(h):
        for j in range(w):
            if not valid[i, j]:
                continue
            n = 0
            sx = sy = sz = 0.0
            qxx = qxy = qxz = qyy = qyz = qzz = 0.0
            for di in range(max(0, i - radius), min(h, i + radius + 1)):
                for dj in range(max(0, j - radius), min(w, j + radius + 1)):
                    if not valid[di, dj]:
                        continue
                    px = points[di, dj, 0]
                    py = points[di, dj, 1]
                    pz = points[di, dj, 2]
                    n += 1
                    sx += px
                    sy += py
                    sz += pz
                    qxx += px * px
                    qxy += px * py
                    qxz += px * pz
                    qyy += py * py
                    qyz += py * pz
                    qzz += pz * pz
            if n < 3:
                continue
            fn = float(n)
            cov[0, 0] = qxx - sx * sx / fn
            cov[0, 1] = qxy - sx * sy / fn
            cov[0, 2] = qxz - sx * sz / fn
            cov[1, 0] = cov[0, 1]
            cov[1, 1] = qyy - sy * sy / fn
            cov[1, 2] = qyz - sy * sz / fn
            cov[2, 0] = cov[0, 2]
            cov[2, 1] = cov[1, 2]
            cov[2, 2] = qzz - sz * sz / fn
            eigvals, eigvecs = np.linalg.eigh(cov)
            if eigvals[1] <= 1e-12 + _RANK_TOL * eigvals[2]:
                continue
            nx = eigvecs[0, 0]
            ny = eigvecs[1, 0]
            nz = eigvecs[2, 0]
            if nx * points[i, j, 0] + ny * points[i, j, 1] + nz * points[i, j, 2] > 0:
                nx = -nx
                ny = -ny
                nz = -nz
            normals[i, j, 0] = nx
            normals[i, j, 1] = ny
            normals[i, j, 2] = nz
            out_valid[i, j] = True
    return normals, out_valid


def plane_normals(points, valid, radius):
    return _plane_normals_impl(points, valid, radius)
