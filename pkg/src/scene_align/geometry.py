"""Camera model, backprojection, geocentric frames, and normal-image encoding.

Conventions used throughout the package:

* Camera frame: x right, y down, z forward (optical axis). Pixel (row v,
  col u) samples the ray ((u - cx)/fx, (v - cy)/fy, 1); depth is the
  camera-frame z coordinate in meters.
* World frame: derived from a :class:`GeocentricFrame`; +y is the up
  (anti-gravity) direction, origin coincides with the camera center.
  Heights are world-y coordinates, the floor is the plane y = floor_height.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

# Byte value of a 90 degree angle is 128, so encoded angles are shifted by 38.
ANGLE_BYTE_OFFSET = 38.0


def _frozen(arr: np.ndarray, dtype=None) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera with a disparity model d = disparity_constant / z."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    disparity_constant: float = 315.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if not self.disparity_constant > 0:
            raise ValueError("disparity_constant must be positive")


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel depth in meters with an explicit validity mask.

    ``values`` is zero wherever ``valid`` is False; valid depths are
    positive and finite.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.shape != valid.shape or values.ndim != 2:
            raise ValueError("values and valid must be 2-d arrays of equal shape")
        if valid.any():
            v = values[valid]
            if not (np.isfinite(v).all() and (v > 0).all()):
                raise ValueError("valid depths must be positive and finite")
        values = np.where(valid, values, 0.0)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def from_meters(cls, meters: np.ndarray) -> "DepthImage":
        """Build from a raw depth map where 0 / non-finite marks missing data."""
        meters = np.asarray(meters, dtype=np.float64)
        valid = np.isfinite(meters) & (meters > 0)
        return cls(np.where(valid, meters, 0.0), valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GeocentricFrame:
    """Gravity direction (up, camera coordinates) plus floor height.

    Defines a world basis [ex, up, ez]: ez is the camera forward axis
    projected onto the horizontal plane (falling back to camera x when the
    camera looks straight along gravity), ex completes the right-handed
    triple. ``floor_height`` is measured along the up direction from the
    camera center.
    """

    gravity: np.ndarray
    floor_height: float = 0.0
    rotation: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        g = np.asarray(self.gravity, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(g) - 1.0) > 1e-9:
            raise ValueError("gravity must be a unit vector")
        ez = None
        for cand in ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0)):
            h = np.asarray(cand) - np.dot(cand, g) * g
            n = np.linalg.norm(h)
            if n > 1e-6:
                ez = h / n
                break
        ex = np.cross(g, ez)
        object.__setattr__(self, "gravity", _frozen(g))
        object.__setattr__(self, "rotation", _frozen(np.stack([ex, g, ez])))

    def to_world(self, points_cam: np.ndarray) -> np.ndarray:
        return np.asarray(points_cam, dtype=np.float64) @ self.rotation.T

    def to_camera(self, points_world: np.ndarray) -> np.ndarray:
        return np.asarray(points_world, dtype=np.float64) @ self.rotation

    def height(self, points_cam: np.ndarray) -> np.ndarray:
        """Height above the camera center along the up direction."""
        return np.asarray(points_cam, dtype=np.float64) @ self.gravity


@dataclass(frozen=True)
class NormalImage:
    """Three channels of byte-encoded angles against the geocentric axes."""

    channels: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.uint8)
        valid = np.asarray(self.valid, dtype=bool)
        if ch.ndim != 3 or ch.shape[2] != 3 or ch.shape[:2] != valid.shape:
            raise ValueError("channels must be (h, w, 3) matching the mask")
        object.__setattr__(self, "channels", _frozen(ch))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def height(self) -> int:
        return self.channels.shape[0]

    @property
    def width(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class PointCloud:
    """3D points in meters, optionally tagged with their source pixel (row, col)."""

    points: np.ndarray
    pixel_index: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if pts.size and not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))
        if self.pixel_index is not None:
            idx = np.asarray(self.pixel_index, dtype=np.int64).reshape(-1, 2)
            if idx.shape[0] != pts.shape[0]:
                raise ValueError("pixel_index length must match points")
            object.__setattr__(self, "pixel_index", _frozen(idx))

    def __len__(self) -> int:
        return self.points.shape[0]


def backproject(
    depth: DepthImage,
    k: CameraIntrinsics,
    mask: np.ndarray | None = None,
    frame: GeocentricFrame | None = None,
) -> PointCloud:
    """Lift valid (and optionally masked) depth pixels to 3D points.

    Returns camera-frame points, or world-frame points when ``frame`` is
    given. Pixels with missing depth are skipped; the result may be empty.
    """
    sel = depth.valid if mask is None else (depth.valid & np.asarray(mask, dtype=bool))
    rows, cols = np.nonzero(sel)
    z = depth.values[rows, cols]
    pts = np.empty((rows.size, 3))
    pts[:, 0] = (cols - k.cx) * z / k.fx
    pts[:, 1] = (rows - k.cy) * z / k.fy
    pts[:, 2] = z
    if frame is not None:
        pts = frame.to_world(pts)
    return PointCloud(pts, np.stack([rows, cols], axis=1) if rows.size else np.empty((0, 2), np.int64))


def backproject_grid(depth: DepthImage, k: CameraIntrinsics) -> np.ndarray:
    """Camera-frame point per pixel as an (h, w, 3) array; zeros where invalid."""
    h, w = depth.values.shape
    us = np.arange(w, dtype=np.float64)
    vs = np.arange(h, dtype=np.float64)
    z = depth.values
    pts = np.empty((h, w, 3))
    pts[:, :, 0] = (us[None, :] - k.cx) * z / k.fx
    pts[:, :, 1] = (vs[:, None] - k.cy) * z / k.fy
    pts[:, :, 2] = z
    return pts


def project(points_cam: np.ndarray, k: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Project camera-frame points to pixel coordinates (u, v).

    Returns the (n, 2) pixel coordinates and a boolean mask of points in
    front of the camera (z > 0); coordinates for points behind are undefined.
    """
    pts = np.asarray(points_cam, dtype=np.float64).reshape(-1, 3)
    in_front = pts[:, 2] > 0
    z = np.where(in_front, pts[:, 2], 1.0)
    uv = np.empty((pts.shape[0], 2))
    uv[:, 0] = k.fx * pts[:, 0] / z + k.cx
    uv[:, 1] = k.fy * pts[:, 1] / z + k.cy
    return uv, in_front


def disparity(z, k: CameraIntrinsics):
    """Disparity d = C / z for positive depth z (meters), elementwise."""
    z = np.asarray(z, dtype=np.float64)
    if np.any(z <= 0):
        raise ValueError("depth must be positive")
    return k.disparity_constant / z


def disparity_image(depth: DepthImage, k: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel disparity with the depth image's validity mask."""
    d = np.zeros_like(depth.values)
    d[depth.valid] = k.disparity_constant / depth.values[depth.valid]
    return d, depth.valid.copy()


def estimate_normals(
    depth: DepthImage,
    k: CameraIntrinsics,
    window_radius: int = 3,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel unit surface normals from a least-squares plane fit.

    For each valid pixel, fits a plane to the backprojected valid neighbors
    within a square window of the given radius and takes its normal,
    oriented toward the camera (n . p < 0). Pixels with fewer than three
    valid neighbors or a degenerate (rank < 2) neighborhood are invalid.

    Returns (normals (h, w, 3) camera-frame, valid (h, w)).
    """
    if window_radius < 1:
        raise ValueError("window_radius must be >= 1")
    pts = backproject_grid(depth, k)
    return kernels.plane_normals(pts, depth.valid, window_radius, backend=backend)


def encode_normal_image(
    normals: np.ndarray,
    valid: np.ndarray,
    frame: GeocentricFrame,
) -> NormalImage:
    """Encode camera-frame normals as byte angles against the geocentric axes.

    Channel i stores round(angle_deg(n, axis_i) + 38) so that 90 degrees maps
    to byte 128; values are clamped to [0, 255]. Invalid pixels store 0.
    """
    normals = np.asarray(normals, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    comps = np.clip(normals @ geocentric_axes(frame).T, -1.0, 1.0)
    angles = np.degrees(np.arccos(comps))
    bytes_ = np.rint(np.clip(angles + ANGLE_BYTE_OFFSET, 0.0, 255.0)).astype(np.uint8)
    bytes_[~valid] = 0
    return NormalImage(bytes_, valid)


def geocentric_axes(frame: GeocentricFrame) -> np.ndarray:
    """The three geocentric axes (rows) in camera coordinates."""
    return frame.rotation


def decode_normal_image(img: NormalImage) -> tuple[np.ndarray, np.ndarray]:
    """Angles in degrees per channel (byte - 38); only valid pixels are meaningful."""
    return img.channels.astype(np.float64) - ANGLE_BYTE_OFFSET, img.valid.copy()


def crop_and_warp(
    img: NormalImage,
    box: tuple[int, int, int, int],
    out_size: int,
    mode: str = "bilinear",
) -> NormalImage:
    """Resample a pixel rectangle (x0, y0, x1, y1), half-open, to out_size^2.

    Angle bytes are resampled directly (bilinear or nearest); pixels mapping
    outside the image, or blending any invalid sample, come out invalid.
    """
    x0, y0, x1, y1 = (int(v) for v in box)
    bw, bh = x1 - x0, y1 - y0
    if bw <= 0 or bh <= 0:
        raise ValueError("box must have positive area")
    if x1 <= 0 or y1 <= 0 or x0 >= img.width or y0 >= img.height:
        raise ValueError("box does not intersect the image")
    if out_size < 1:
        raise ValueError("out_size must be >= 1")

    js = np.arange(out_size, dtype=np.float64)
    sx = x0 + (js + 0.5) * (bw / out_size) - 0.5
    sy = y0 + (js + 0.5) * (bh / out_size) - 0.5

    if mode == "nearest":
        ix = np.floor(x0 + (js + 0.5) * (bw / out_size)).astype(np.int64)
        iy = np.floor(y0 + (js + 0.5) * (bh / out_size)).astype(np.int64)
        inside = ((ix >= 0) & (ix < img.width))[None, :] & ((iy >= 0) & (iy < img.height))[:, None]
        cx = np.clip(ix, 0, img.width - 1)
        cy = np.clip(iy, 0, img.height - 1)
        out = img.channels[cy[:, None], cx[None, :]]
        ok = img.valid[cy[:, None], cx[None, :]] & inside
    elif mode == "bilinear":
        fx = np.floor(sx)
        fy = np.floor(sy)
        ax = (sx - fx)[None, :, None]
        ay = (sy - fy)[:, None, None]
        out_f = np.zeros((out_size, out_size, 3))
        ok = np.ones((out_size, out_size), dtype=bool)
        for dy, dx, wgt in (
            (0, 0, (1 - ay) * (1 - ax)),
            (0, 1, (1 - ay) * ax),
            (1, 0, ay * (1 - ax)),
            (1, 1, ay * ax),
        ):
            px = fx.astype(np.int64) + dx
            py = fy.astype(np.int64) + dy
            inside = ((px >= 0) & (px < img.width))[None, :] & ((py >= 0) & (py < img.height))[:, None]
            cpx = np.clip(px, 0, img.width - 1)
            cpy = np.clip(py, 0, img.height - 1)
            val = img.channels[cpy[:, None], cpx[None, :]].astype(np.float64)
            vld = img.valid[cpy[:, None], cpx[None, :]] & inside
            contributes = wgt[:, :, 0] > 0
            ok &= vld | ~contributes
            out_f += wgt * val
        out = np.rint(np.clip(out_f, 0, 255)).astype(np.uint8)
    else:
        raise ValueError(f"unknown resampling mode: {mode!r}")

    out = np.where(ok[:, :, None], out, np.uint8(0))
    return NormalImage(out, ok)
