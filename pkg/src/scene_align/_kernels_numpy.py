"""Pure-numpy implementations of the hot kernels (fallback path)."""

from __future__ import annotations

import numpy as np

_RANK_TOL = 1e-9


def _clip_near(tri: np.ndarray, z_near: float) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of a triangle against z >= z_near."""
    out: list[np.ndarray] = []
    for i in range(3):
        a = tri[i]
        b = tri[(i + 1) % 3]
        da = a[2] - z_near
        db = b[2] - z_near
        if da >= 0.0:
            out.append(a)
        if (da >= 0.0) != (db >= 0.0):
            s = da / (da - db)
            out.append(a + s * (b - a))
    return out


def rasterize(tris, fx, fy, cx, cy, width, height, z_near):
    depth = np.full((height, width), np.inf)
    tri_id = np.full((height, width), -1, dtype=np.int32)
    for t in range(tris.shape[0]):
        poly = _clip_near(tris[t], z_near)
        for f in range(1, len(poly) - 1):
            _raster_tri(poly[0], poly[f], poly[f + 1], t, fx, fy, cx, cy, width, height, depth, tri_id)
    return depth, tri_id


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
        x1, y1, w1, x2, y2, w2 = x2, y2, w2, x1, y1, w1
        area2 = -area2

    ix0 = max(0, int(np.ceil(min(x0, x1, x2))))
    ix1 = min(width - 1, int(np.floor(max(x0, x1, x2))))
    iy0 = max(0, int(np.ceil(min(y0, y1, y2))))
    iy1 = min(height - 1, int(np.floor(max(y0, y1, y2))))
    if ix0 > ix1 or iy0 > iy1:
        return

    pxs = np.arange(ix0, ix1 + 1, dtype=np.float64)[None, :]
    pys = np.arange(iy0, iy1 + 1, dtype=np.float64)[:, None]

    e0 = (x2 - x1) * (pys - y1) - (y2 - y1) * (pxs - x1)
    e1 = (x0 - x2) * (pys - y2) - (y0 - y2) * (pxs - x2)
    e2 = (x1 - x0) * (pys - y0) - (y1 - y0) * (pxs - x0)
    inside = (
        ((e0 > 0) | ((e0 == 0) & _top_left(x1, y1, x2, y2)))
        & ((e1 > 0) | ((e1 == 0) & _top_left(x2, y2, x0, y0)))
        & ((e2 > 0) | ((e2 == 0) & _top_left(x0, y0, x1, y1)))
    )
    if not inside.any():
        return

    inv_z = (e0 * w0 + e1 * w1 + e2 * w2) / area2
    with np.errstate(divide="ignore"):
        z = 1.0 / inv_z
    win_d = depth[iy0 : iy1 + 1, ix0 : ix1 + 1]
    win_t = tri_id[iy0 : iy1 + 1, ix0 : ix1 + 1]
    upd = inside & (inv_z > 0) & (z < win_d)
    win_d[upd] = z[upd]
    win_t[upd] = t_index


def _top_left(ax, ay, bx, by) -> bool:
    # Edge a->b of a positive-area triangle: pixel centers exactly on a top
    # or left edge count as covered, others on the boundary do not.
    dx = bx - ax
    dy = by - ay
    return (dy == 0 and dx > 0) or dy < 0


def _integral(img: np.ndarray) -> np.ndarray:
    pad = np.zeros((img.shape[0] + 1, img.shape[1] + 1) + img.shape[2:], dtype=np.float64)
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=pad[1:, 1:])
    return pad


def _window_sum(integral: np.ndarray, radius: int) -> np.ndarray:
    h = integral.shape[0] - 1
    w = integral.shape[1] - 1
    r = radius
    y0 = np.clip(np.arange(h) - r, 0, h)
    y1 = np.clip(np.arange(h) + r + 1, 0, h)
    x0 = np.clip(np.arange(w) - r, 0, w)
    x1 = np.clip(np.arange(w) + r + 1, 0, w)
    return (
        integral[y1[:, None], x1[None, :]]
        - integral[y0[:, None], x1[None, :]]
        - integral[y1[:, None], x0[None, :]]
        + integral[y0[:, None], x0[None, :]]
    )


def plane_normals(points, valid, radius):
    h, w, _ = points.shape
    pts = np.where(valid[:, :, None], points, 0.0)

    count = _window_sum(_integral(valid.astype(np.float64)), radius)
    s1 = _window_sum(_integral(pts), radius)
    prods = pts[:, :, :, None] * pts[:, :, None, :]
    s2 = _window_sum(_integral(prods.reshape(h, w, 9)), radius).reshape(h, w, 3, 3)

    normals = np.zeros((h, w, 3))
    out_valid = valid & (count >= 3)
    if not out_valid.any():
        return normals, out_valid

    rows, cols = np.nonzero(out_valid)
    n = count[rows, cols][:, None]
    s = s1[rows, cols]
    cov = s2[rows, cols] - (s[:, :, None] * s[:, None, :]) / n[:, :, None]

    eigvals, eigvecs = np.linalg.eigh(cov)
    ok = eigvals[:, 1] > (1e-12 + _RANK_TOL * eigvals[:, 2])
    nrm = eigvecs[:, :, 0]
    flip = np.einsum("ij,ij->i", nrm, points[rows, cols]) > 0
    nrm[flip] *= -1.0

    normals[rows, cols] = np.where(ok[:, None], nrm, 0.0)
    out_valid[rows, cols] = ok
    return normals, out_valid
