"""Synthetic pose-labeled training data: models rendered on a floor.

One object per scene. All randomness flows from a root seed through named
substreams keyed by (category, model slot, pose), so generation is
deterministic and safely parallelizable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    CameraIntrinsics,
    DepthImage,
    GeocentricFrame,
    NormalImage,
    crop_and_warp,
    encode_normal_image,
)
from .mesh import TriangleMesh, floor_quad
from .render import ModelLibrary, Placement, render, scale_to_area

STREAM_SCENE = 7
STREAM_BOXES = 8
STREAM_BACKGROUND = 9

Box = tuple[int, int, int, int]  # (x0, y0, x1, y1), half-open


@dataclass(frozen=True)
class CategoryStats:
    """Top-view box area distribution and placement depth range per category."""

    mu_area: float
    sigma_area: float
    z_range: tuple[float, float]

    def __post_init__(self):
        if not (self.mu_area > 0 and self.sigma_area >= 0):
            raise ValueError("mu_area must be > 0 and sigma_area >= 0")
        if not (0 < self.z_range[0] <= self.z_range[1]):
            raise ValueError("z_range must be positive and ordered")


@dataclass(frozen=True)
class SceneSample:
    """One rendered scene: object over floor, with the ground truth pose."""

    placement: Placement
    depth: DepthImage
    object_mask: np.ndarray
    normals: np.ndarray
    normals_valid: np.ndarray
    azimuth: float


@dataclass(frozen=True)
class SynthExample:
    crop: NormalImage
    category: str
    category_id: int
    label: int
    theta_gt: float
    placement: Placement


def box_iou_2d(a: Box, b: Box) -> float:
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = max(0, ix1 - ix0), max(0, iy1 - iy0)
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def mask_bounding_box(mask: np.ndarray) -> Box:
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise ValueError("mask is empty")
    return (int(cols.min()), int(rows.min()), int(cols.max()) + 1, int(rows.max()) + 1)


def azimuth_bin(theta: float, n_posebin: int) -> int:
    """label = floor(((theta mod 2*pi) / 2*pi) * n_posebin)."""
    frac = (float(theta) % (2.0 * np.pi)) / (2.0 * np.pi)
    return min(int(np.floor(frac * n_posebin)), n_posebin - 1)


def compose_scene(
    mesh: TriangleMesh,
    placement: Placement,
    frame: GeocentricFrame,
    k: CameraIntrinsics,
    floor_half_extent: float = 15.0,
) -> tuple[DepthImage, np.ndarray, np.ndarray, np.ndarray]:
    """Render the object over a floor plane; returns (depth, object mask, normals, normal validity)."""
    obj = render(mesh, placement, frame, k, with_normals=True)
    floor = render(
        floor_quad(floor_half_extent, frame.floor_height),
        Placement(1.0, 0.0, (0.0, 0.0, 0.0)),
        frame,
        k,
        with_normals=True,
    )
    d_obj = np.where(obj.mask, obj.depth.values, np.inf)
    d_flr = np.where(floor.mask, floor.depth.values, np.inf)
    combined = np.minimum(d_obj, d_flr)
    valid = np.isfinite(combined)
    object_mask = obj.mask & (d_obj <= d_flr)
    normals = np.where(object_mask[:, :, None], obj.normals, floor.normals)
    depth = DepthImage(np.where(valid, combined, 0.0), valid)
    return depth, object_mask, normals, valid


def sample_scene(
    mesh: TriangleMesh,
    stats: CategoryStats,
    frame: GeocentricFrame,
    k: CameraIntrinsics,
    rng: np.random.Generator,
    max_tries: int = 100,
) -> SceneSample:
    """Sample scale, yaw and floor-resting placement, then render the scene.

    The footprint area is drawn from N(mu, sigma) truncated at two sigma
    (and at zero); yaw is uniform over (-pi, pi]; the object center lands on
    a camera ray at a depth drawn from the stats' range, resting on the
    floor. Scenes whose object is entirely out of view are redrawn.
    """
    for _ in range(max_tries):
        area = _draw_truncated_area(stats, rng, max_tries)
        s = scale_to_area(mesh, area)
        theta = float(np.pi - rng.uniform(0.0, 2.0 * np.pi))

        z = rng.uniform(stats.z_range[0], stats.z_range[1])
        u = rng.uniform(0.35, 0.65) * k.width
        ray_cam = np.array([(u - k.cx) * z / k.fx, 0.0, z])
        target = frame.to_world(ray_cam.reshape(1, 3))[0]

        scaled = s * mesh.vertices
        rotated = scaled @ _yaw_T(theta)
        t_y = frame.floor_height - rotated[:, 1].min()
        cx = 0.5 * (rotated[:, 0].max() + rotated[:, 0].min())
        cz = 0.5 * (rotated[:, 2].max() + rotated[:, 2].min())
        placement = Placement(s, theta, np.array([target[0] - cx, t_y, target[2] - cz]))

        depth, object_mask, normals, valid = compose_scene(mesh, placement, frame, k)
        if object_mask.any():
            return SceneSample(placement, depth, object_mask, normals, valid, theta)
    raise ValueError("could not sample a visible scene")


def _yaw_T(theta: float) -> np.ndarray:
    from .mesh import yaw_matrix

    return yaw_matrix(theta).T


def _draw_truncated_area(stats: CategoryStats, rng: np.random.Generator, max_tries: int) -> float:
    if stats.sigma_area == 0.0:
        return stats.mu_area
    for _ in range(max_tries):
        a = rng.normal(stats.mu_area, stats.sigma_area)
        if a > 0 and abs(a - stats.mu_area) <= 2.0 * stats.sigma_area:
            return float(a)
    raise ValueError("area rejection sampling failed; degenerate stats")


def sample_training_boxes(gt_box: Box, n: int, rng: np.random.Generator, min_iou: float = 0.7) -> list[Box]:
    """n jittered boxes, each overlapping the ground-truth box above min_iou."""
    x0, y0, x1, y1 = gt_box
    w, h = x1 - x0, y1 - y0
    if w <= 0 or h <= 0:
        raise ValueError("gt_box is empty")
    out: list[Box] = []
    for _ in range(n):
        box = gt_box
        for _ in range(200):
            cx = (x0 + x1) / 2.0 + rng.uniform(-0.15, 0.15) * w
            cy = (y0 + y1) / 2.0 + rng.uniform(-0.15, 0.15) * h
            sw = w * rng.uniform(0.85, 1.18)
            sh = h * rng.uniform(0.85, 1.18)
            cand = (
                int(round(cx - sw / 2)),
                int(round(cy - sh / 2)),
                int(round(cx + sw / 2)),
                int(round(cy + sh / 2)),
            )
            if cand[2] > cand[0] and cand[3] > cand[1] and box_iou_2d(cand, gt_box) > min_iou:
                box = cand
                break
        out.append(box)  # gt box itself always qualifies as the fallback
    return out


def sample_background_boxes(
    gt_box: Box,
    width: int,
    height: int,
    n: int,
    rng: np.random.Generator,
    max_iou: float = 0.3,
) -> list[Box]:
    """Boxes of comparable size overlapping the object box below max_iou."""
    w = gt_box[2] - gt_box[0]
    h = gt_box[3] - gt_box[1]
    out: list[Box] = []
    for _ in range(n):
        for _ in range(200):
            sw = max(2, int(round(w * rng.uniform(0.7, 1.3))))
            sh = max(2, int(round(h * rng.uniform(0.7, 1.3))))
            x0 = int(rng.integers(0, max(1, width - sw // 2)))
            y0 = int(rng.integers(0, max(1, height - sh // 2)))
            cand = (x0, y0, x0 + sw, y0 + sh)
            if box_iou_2d(cand, gt_box) < max_iou:
                out.append(cand)
                break
    return out


def make_dataset(
    library: ModelLibrary,
    stats: dict[str, CategoryStats],
    frame: GeocentricFrame,
    k: CameraIntrinsics,
    seed: int,
    models_per_cat: int = 50,
    poses_per_model: int = 10,
    boxes_per_pose: int = 5,
    background_per_pose: int = 1,
    crop_size: int = 48,
    n_posebin: int = 8,
) -> list[SynthExample]:
    """Deterministic pose-labeled crop dataset over the whole library.

    Foreground examples carry the azimuth bin of the ground-truth yaw;
    background examples (low-overlap boxes) carry label n_posebin. Model
    slots cycle round-robin through each category's library entries.
    """
    categories = library.category_names()
    examples: list[SynthExample] = []
    for ci, cat in enumerate(categories):
        if cat not in stats:
            raise KeyError(f"no stats for category {cat!r}")
        models = library.models(cat)
        for slot in range(models_per_cat):
            _, mesh = models[slot % len(models)]
            for pose in range(poses_per_model):
                scene_rng = np.random.default_rng([seed, STREAM_SCENE, ci, slot, pose])
                scene = sample_scene(mesh, stats[cat], frame, k, scene_rng)
                img = encode_normal_image(scene.normals, scene.normals_valid, frame)
                gt_box = mask_bounding_box(scene.object_mask)
                label = azimuth_bin(scene.azimuth, n_posebin)

                box_rng = np.random.default_rng([seed, STREAM_BOXES, ci, slot, pose])
                for box in sample_training_boxes(gt_box, boxes_per_pose, box_rng):
                    crop = crop_and_warp(img, box, crop_size, mode="bilinear")
                    examples.append(SynthExample(crop, cat, ci, label, scene.azimuth, scene.placement))

                bg_rng = np.random.default_rng([seed, STREAM_BACKGROUND, ci, slot, pose])
                for box in sample_background_boxes(gt_box, k.width, k.height, background_per_pose, bg_rng):
                    crop = crop_and_warp(img, box, crop_size, mode="bilinear")
                    examples.append(SynthExample(crop, cat, ci, n_posebin, scene.azimuth, scene.placement))
    return examples
