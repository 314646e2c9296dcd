"""Hypothesis generation and the gravity-constrained render-based ICP loop.

All fitting happens in the world frame, where the up axis is +y; the rigid
refit estimates only a yaw about up plus a 3D translation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import ndtri

from .geometry import CameraIntrinsics, DepthImage, GeocentricFrame, backproject
from .mesh import TriangleMesh, yaw_matrix
from .render import Placement, render

BRUTE_FORCE_LIMIT = 200


@dataclass(frozen=True)
class IcpParams:
    n_iter: int = 50
    trim_fraction: float = 0.20
    tol_yaw: float = 1e-4
    tol_translation: float = 1e-4

    def __post_init__(self):
        if not (0 <= self.trim_fraction < 1):
            raise ValueError("trim_fraction must be in [0, 1)")
        if self.n_iter < 1:
            raise ValueError("n_iter must be >= 1")


@dataclass(frozen=True)
class SearchConfig:
    n_scale: int = 10
    n_models: int = 5
    k_pose: int = 2
    icp: IcpParams = field(default_factory=IcpParams)

    def __post_init__(self):
        if min(self.n_scale, self.n_models, self.k_pose) < 1:
            raise ValueError("all search counts must be >= 1")


@dataclass(frozen=True)
class Hypothesis:
    model: str
    scale: float
    yaw0: float
    translation0: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        t = np.asarray(self.translation0, dtype=np.float64).reshape(3)
        t.setflags(write=False)
        object.__setattr__(self, "translation0", t)


@dataclass
class FitCandidate:
    hypothesis: Hypothesis
    placement: Placement
    residual_trace: list[float]
    residual: float
    iterations: int
    failed: bool = False


def sample_scales(mu_area: float, sigma_area: float, n: int) -> np.ndarray:
    """Stratified samples of N(mu, sigma) at quantiles (i + 0.5) / n.

    Non-positive draws are clamped to 0.01 * mu_area.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma_area < 0:
        raise ValueError("sigma_area must be >= 0")
    q = (np.arange(n) + 0.5) / n
    areas = mu_area + sigma_area * ndtri(q)
    return np.where(areas <= 0, 0.01 * mu_area, areas)


def resting_height_offset(mesh: TriangleMesh, scale: float, yaw: float) -> float:
    """Lowest vertex height of the scaled, yawed mesh before translation."""
    rotated_y = (scale * mesh.vertices) @ yaw_matrix(yaw).T[:, 1]
    return float(rotated_y.min())


def init_translation(
    mask: np.ndarray,
    depth: DepthImage,
    k: CameraIntrinsics,
    frame: GeocentricFrame,
    mesh: TriangleMesh,
    scale: float,
    yaw0: float,
) -> np.ndarray:
    """Median-of-mask horizontal translation; vertical from the floor constraint."""
    pc = backproject(depth, k, mask=mask, frame=frame)
    if len(pc) == 0:
        raise ValueError("mask has no valid-depth pixels")
    tx = float(np.median(pc.points[:, 0]))
    tz = float(np.median(pc.points[:, 2]))
    ty = frame.floor_height - resting_height_offset(mesh, scale, yaw0)
    return np.array([tx, ty, tz])


def rotation_about(axis: np.ndarray, theta: float) -> np.ndarray:
    """Rodrigues rotation by theta about a unit axis."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    c, s = np.cos(theta), np.sin(theta)
    cross = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return c * np.eye(3) + s * cross + (1 - c) * np.outer(a, a)


def constrained_rigid_fit(
    source: np.ndarray, target: np.ndarray, gravity: np.ndarray
) -> tuple[float, np.ndarray]:
    """Least-squares yaw-about-gravity plus translation mapping source onto target.

    Minimizes sum ||R(theta, g) p_i + t - q_i||^2 over theta and t. Returns
    (theta, t); theta defaults to 0 when the in-plane cross terms vanish.
    """
    p = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if p.shape[0] == 0 or p.shape != q.shape:
        raise ValueError("need at least one source/target pair")
    g = np.asarray(gravity, dtype=np.float64).reshape(3)

    p_bar = p.mean(axis=0)
    q_bar = q.mean(axis=0)
    a = p - p_bar
    b = q - q_bar
    a = a - np.outer(a @ g, g)
    b = b - np.outer(b @ g, g)

    dot = float(np.einsum("ij,ij->", a, b))
    crs = float(np.einsum("ij,j->", np.cross(a, b), g))
    theta = 0.0 if (dot == 0.0 and crs == 0.0) else float(np.arctan2(crs, dot))
    t = q_bar - rotation_about(g, theta) @ p_bar
    return theta, t


def nearest_neighbors(points: np.ndarray, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index into points of the nearest neighbor per query, plus distances.

    Uses a k-d tree above BRUTE_FORCE_LIMIT points, exhaustive search below.
    """
    points = np.asarray(points, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    if points.shape[0] <= BRUTE_FORCE_LIMIT:
        d2 = ((queries[:, None, :] - points[None, :, :]) ** 2).sum(-1)
        idx = np.argmin(d2, axis=1)
        return idx, np.sqrt(d2[np.arange(len(queries)), idx])
    dist, idx = cKDTree(points).query(queries)
    return idx, dist


def _trim_pairs(dist: np.ndarray, trim_fraction: float) -> np.ndarray:
    """Indices of kept pairs: worst trim_fraction by distance dropped.

    Stable sort, so equal distances are dropped highest-index first.
    """
    n = dist.shape[0]
    n_drop = int(np.floor(trim_fraction * n))
    order = np.argsort(dist, kind="stable")
    return np.sort(order[: n - n_drop])


def icp_align(
    depth: DepthImage,
    mask: np.ndarray,
    mesh: TriangleMesh,
    scale: float,
    yaw0: float,
    translation0: np.ndarray,
    frame: GeocentricFrame,
    k: CameraIntrinsics,
    params: IcpParams = IcpParams(),
    model_name: str = "",
) -> FitCandidate:
    """Render-based trimmed ICP with yaw-only rotation updates.

    Each iteration renders the model at the current placement, backprojects
    its pixels to P_model and the mask pixels to P_object, matches every
    object point to its nearest model point, drops the worst matches, and
    refits (yaw, translation) in closed form. Stops early once both
    parameter changes fall below the tolerances.
    """
    hyp = Hypothesis(model_name, scale, yaw0, translation0)
    p_object = backproject(depth, k, mask=mask, frame=frame).points
    if p_object.shape[0] == 0:
        raise ValueError("segmentation mask has no valid-depth pixels")

    up = np.array([0.0, 1.0, 0.0])
    placement = Placement(scale, yaw0, translation0)
    trace: list[float] = []
    iterations = 0

    for _ in range(params.n_iter):
        iterations += 1
        rendered = render(mesh, placement, frame, k)
        p_model = backproject(rendered.depth, k, frame=frame).points
        if p_model.shape[0] == 0:
            return FitCandidate(hyp, placement, trace, float("inf"), iterations, failed=True)

        idx, dist = nearest_neighbors(p_model, p_object)
        keep = _trim_pairs(dist, params.trim_fraction)
        src = p_model[idx[keep]]
        dst = p_object[keep]

        d_yaw, d_t = constrained_rigid_fit(src, dst, up)
        new_yaw = placement.yaw + d_yaw
        new_t = rotation_about(up, d_yaw) @ placement.translation + d_t
        moved = src @ rotation_about(up, d_yaw).T + d_t
        trace.append(float(np.sqrt(np.mean(((moved - dst) ** 2).sum(-1)))))

        t_change = float(np.linalg.norm(new_t - placement.translation))
        placement = Placement(scale, new_yaw, new_t)
        if abs(d_yaw) < params.tol_yaw and t_change < params.tol_translation:
            break

    return FitCandidate(hyp, placement, trace, trace[-1], iterations, failed=False)


def bin_center(bin_index: int, n_posebin: int) -> float:
    """Center yaw of an azimuth bin, wrapped to (-pi, pi].

    Bin b covers yaw mod 2*pi in [2*pi*b/n, 2*pi*(b+1)/n).
    """
    theta = 2.0 * np.pi * (bin_index + 0.5) / n_posebin
    if theta > np.pi:
        theta -= 2.0 * np.pi
    return float(theta)


def generate_hypotheses(
    mask: np.ndarray,
    depth: DepthImage,
    pose_bins: list[int],
    n_posebin: int,
    mu_area: float,
    sigma_area: float,
    models: list[tuple[str, TriangleMesh]],
    frame: GeocentricFrame,
    k: CameraIntrinsics,
    cfg: SearchConfig,
) -> list[Hypothesis]:
    """Cross product of top-k pose bins x stratified scales x library models."""
    from .render import scale_to_area

    if not pose_bins:
        raise ValueError("need at least one pose bin")
    areas = sample_scales(mu_area, sigma_area, cfg.n_scale)
    used_models = models[: cfg.n_models]
    out: list[Hypothesis] = []
    for b in pose_bins[: cfg.k_pose]:
        yaw0 = bin_center(b, n_posebin)
        for area in areas:
            for name, mesh in used_models:
                s = scale_to_area(mesh, float(area))
                t0 = init_translation(mask, depth, k, frame, mesh, s, yaw0)
                out.append(Hypothesis(name, s, yaw0, t0))
    return out
