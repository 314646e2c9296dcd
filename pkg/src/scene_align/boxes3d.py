"""Gravity-aligned 3D boxes: min-area top-view rectangle fitting and IoU.

Boxes live in the world frame: the vertical axis is +y, the footprint is a
rectangle in the x-z plane at the box yaw. ``half_extents`` is ordered
(u, y, v) where u is the in-plane axis at the yaw angle, v the axis at
yaw + 90 degrees, and y the vertical half-height.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, DepthImage, GeocentricFrame, backproject
from .mesh import TriangleMesh
from .render import Placement

MIN_HALF_EXTENT = 5e-7  # degenerate boxes widened to 1e-6 m across


@dataclass(frozen=True)
class OrientedBox3D:
    yaw: float
    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        h = np.asarray(self.half_extents, dtype=np.float64).reshape(3)
        if not (h > 0).all():
            raise ValueError("half extents must be positive")
        yaw = float(self.yaw) % (2.0 * np.pi)
        if yaw > np.pi:
            yaw -= 2.0 * np.pi
        c.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "yaw", yaw)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_extents", h)

    @property
    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))

    def footprint_corners(self) -> np.ndarray:
        """The 4 corners of the top-view rectangle, counter-clockwise, (4, 2)."""
        u = np.array([np.cos(self.yaw), -np.sin(self.yaw)])
        v = np.array([np.sin(self.yaw), np.cos(self.yaw)])
        c = self.center[[0, 2]]
        hu, hv = self.half_extents[0], self.half_extents[2]
        return np.array([c + hu * u + hv * v, c - hu * u + hv * v, c - hu * u - hv * v, c + hu * u - hv * v])

    @property
    def y_range(self) -> tuple[float, float]:
        return (
            float(self.center[1] - self.half_extents[1]),
            float(self.center[1] + self.half_extents[1]),
        )


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull of 2D points, counter-clockwise."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def min_area_rect(points2d: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Minimum-area enclosing rectangle over orientations, by rotating calipers.

    Returns (yaw in [0, pi/2), center (2,), half_extents (2,)): half_extents[0]
    lies along the axis at the yaw angle. Ties prefer the smaller yaw;
    degenerate inputs are widened to MIN_HALF_EXTENT.
    """
    pts = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("need at least one point")
    hull = convex_hull(pts)

    candidates: list[float]
    if len(hull) < 3:
        if len(hull) == 1:
            candidates = [0.0]
        else:
            d = hull[1] - hull[0]
            candidates = [float(np.arctan2(-d[1], d[0]))]
    else:
        edges = np.diff(np.vstack([hull, hull[:1]]), axis=0)
        candidates = [float(np.arctan2(-e[1], e[0])) for e in edges]

    best = None
    for phi in candidates:
        yaw = phi % (np.pi / 2.0)
        c, s = np.cos(yaw), np.sin(yaw)
        u = pts[:, 0] * c - pts[:, 1] * s
        v = pts[:, 0] * s + pts[:, 1] * c
        du = u.max() - u.min()
        dv = v.max() - v.min()
        area = du * dv
        key = (area, yaw)
        if best is None or key < best[0]:
            mid_u = 0.5 * (u.max() + u.min())
            mid_v = 0.5 * (v.max() + v.min())
            center = np.array([mid_u * c + mid_v * s, -mid_u * s + mid_v * c])
            best = (key, yaw, center, np.array([du / 2.0, dv / 2.0]))

    _, yaw, center, half = best
    return yaw, center, np.maximum(half, MIN_HALF_EXTENT)


def box_from_segment(
    mask: np.ndarray,
    depth: DepthImage,
    k: CameraIntrinsics,
    frame: GeocentricFrame,
    delta: float = 2.0,
) -> OrientedBox3D:
    """Outlier-robust gravity-aligned box around the segment's 3D points.

    Points are pre-trimmed to the [delta, 100-delta] percentile band per
    world axis before the min-area yaw search; the box extents are then the
    same percentile band of the in-plane (yaw-frame) coordinates, the bottom
    rests on the floor, and the top sits at the (100-delta) height
    percentile.
    """
    pc = backproject(depth, k, mask=mask, frame=frame)
    if len(pc) == 0:
        raise ValueError("mask has no valid-depth pixels")
    pts = pc.points
    xz = pts[:, [0, 2]]

    lo = np.percentile(xz, delta, axis=0)
    hi = np.percentile(xz, 100.0 - delta, axis=0)
    inside = ((xz >= lo) & (xz <= hi)).all(axis=1)
    trimmed = xz[inside] if inside.any() else xz

    yaw, _, _ = min_area_rect(trimmed)
    c, s = np.cos(yaw), np.sin(yaw)
    u = xz[:, 0] * c - xz[:, 1] * s
    v = xz[:, 0] * s + xz[:, 1] * c
    u0, u1 = np.percentile(u, [delta, 100.0 - delta])
    v0, v1 = np.percentile(v, [delta, 100.0 - delta])

    top = float(np.percentile(pts[:, 1], 100.0 - delta))
    bottom = frame.floor_height
    mid_u, mid_v = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    center = np.array([mid_u * c + mid_v * s, 0.5 * (top + bottom), -mid_u * s + mid_v * c])
    half = np.array(
        [
            max((u1 - u0) / 2.0, MIN_HALF_EXTENT),
            max((top - bottom) / 2.0, MIN_HALF_EXTENT),
            max((v1 - v0) / 2.0, MIN_HALF_EXTENT),
        ]
    )
    return OrientedBox3D(yaw, center, half)


def box_from_model(mesh: TriangleMesh, placement: Placement) -> OrientedBox3D:
    """Tight gravity-aligned box of the posed mesh at the placement yaw."""
    w = placement.apply(mesh.vertices)
    c, s = np.cos(placement.yaw), np.sin(placement.yaw)
    u = w[:, 0] * c - w[:, 2] * s
    v = w[:, 0] * s + w[:, 2] * c
    mid_u = 0.5 * (u.max() + u.min())
    mid_v = 0.5 * (v.max() + v.min())
    center = np.array([mid_u * c + mid_v * s, 0.5 * (w[:, 1].max() + w[:, 1].min()), -mid_u * s + mid_v * c])
    half = np.array(
        [
            max((u.max() - u.min()) / 2.0, MIN_HALF_EXTENT),
            max((w[:, 1].max() - w[:, 1].min()) / 2.0, MIN_HALF_EXTENT),
            max((v.max() - v.min()) / 2.0, MIN_HALF_EXTENT),
        ]
    )
    return OrientedBox3D(placement.yaw, center, half)


def clip_polygon(subject: np.ndarray, clip_rect: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon by a convex polygon (both CCW)."""
    output = [p for p in np.asarray(subject, dtype=np.float64)]
    n = len(clip_rect)
    for i in range(n):
        a = clip_rect[i]
        b = clip_rect[(i + 1) % n]
        edge = b - a
        if not output:
            break
        inputs = output
        output = []
        prev = inputs[-1]
        prev_in = edge[0] * (prev[1] - a[1]) - edge[1] * (prev[0] - a[0]) >= 0
        for cur in inputs:
            cur_in = edge[0] * (cur[1] - a[1]) - edge[1] * (cur[0] - a[0]) >= 0
            if cur_in != prev_in:
                d = cur - prev
                denom = edge[0] * d[1] - edge[1] * d[0]
                t = (edge[1] * (prev[0] - a[0]) - edge[0] * (prev[1] - a[1])) / denom
                output.append(prev + t * d)
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    return np.asarray(output).reshape(-1, 2)


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def box_iou3d(a: OrientedBox3D, b: OrientedBox3D) -> float:
    """Volume IoU: top-view polygon intersection times vertical overlap."""
    ay0, ay1 = a.y_range
    by0, by1 = b.y_range
    dy = min(ay1, by1) - max(ay0, by0)
    if dy <= 0:
        return 0.0
    inter_poly = clip_polygon(a.footprint_corners(), b.footprint_corners())
    inter = polygon_area(inter_poly) * dy
    union = a.volume + b.volume - inter
    return float(inter / union) if union > 0 else 0.0
