"""Software z-buffer rendering of posed meshes into depth / mask / normal images."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import CameraIntrinsics, DepthImage, GeocentricFrame
from .mesh import TriangleMesh, yaw_matrix


def _wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    t = float(theta) % (2.0 * np.pi)
    if t > np.pi:
        t -= 2.0 * np.pi
    return t


@dataclass(frozen=True)
class Placement:
    """Isotropic scale, yaw about gravity, and world-frame translation."""

    scale: float
    yaw: float
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        t.setflags(write=False)
        object.__setattr__(self, "yaw", _wrap_angle(self.yaw))
        object.__setattr__(self, "translation", t)

    def apply(self, vertices: np.ndarray) -> np.ndarray:
        """Model-frame vertices to world frame: R(yaw) * s * v + t."""
        return (self.scale * np.asarray(vertices, dtype=np.float64)) @ yaw_matrix(self.yaw).T + self.translation


@dataclass(frozen=True)
class RenderOutput:
    """Rendered depth plus the model coverage mask and optional normals."""

    depth: DepthImage
    mask: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)


@dataclass
class ModelLibrary:
    """Named meshes grouped by category."""

    categories: dict[str, list[tuple[str, TriangleMesh]]] = field(default_factory=dict)

    def add(self, category: str, name: str, mesh: TriangleMesh) -> None:
        self.categories.setdefault(category, []).append((name, mesh))

    def models(self, category: str) -> list[tuple[str, TriangleMesh]]:
        if category not in self.categories:
            raise KeyError(f"unknown category: {category!r}")
        return self.categories[category]

    def get(self, category: str, name: str) -> TriangleMesh:
        for n, m in self.models(category):
            if n == name:
                return m
        raise KeyError(f"unknown model {name!r} in category {category!r}")

    def category_names(self) -> list[str]:
        return sorted(self.categories)


def render(
    mesh: TriangleMesh,
    placement: Placement,
    frame: GeocentricFrame,
    k: CameraIntrinsics,
    with_normals: bool = False,
    backend: str | None = None,
) -> RenderOutput:
    """Z-buffer render of the posed mesh; see kernels.rasterize for the fill rule.

    Normals, when requested, are flat per-face normals in the camera frame,
    oriented toward the camera. A mesh fully behind the camera produces an
    empty mask.
    """
    world_verts = placement.apply(mesh.vertices)
    cam_verts = frame.to_camera(world_verts)
    tris_cam = cam_verts[mesh.triangles]
    depth_buf, tri_id = kernels.rasterize(
        tris_cam, k.fx, k.fy, k.cx, k.cy, k.width, k.height, backend=backend
    )
    mask = tri_id >= 0
    depth = DepthImage(np.where(mask, depth_buf, 0.0), mask)
    normals = None
    if with_normals:
        normals = _face_normal_image(tris_cam, tri_id, mask)
    return RenderOutput(depth, mask, normals)


def _face_normal_image(tris_cam: np.ndarray, tri_id: np.ndarray, mask: np.ndarray) -> np.ndarray:
    normals = np.zeros(tri_id.shape + (3,))
    if not mask.any() or tris_cam.shape[0] == 0:
        return normals
    a = tris_cam[:, 0]
    n = np.cross(tris_cam[:, 1] - a, tris_cam[:, 2] - a)
    norms = np.linalg.norm(n, axis=1)
    norms[norms == 0] = 1.0
    n /= norms[:, None]
    centroid = tris_cam.mean(axis=1)
    flip = np.einsum("ij,ij->i", n, centroid) > 0
    n[flip] *= -1.0
    normals[mask] = n[tri_id[mask]]
    return normals


def top_view_area(mesh: TriangleMesh, scale: float = 1.0) -> float:
    """Area of the axis-aligned top-view bounding rectangle at the given scale.

    Computed in the mesh's canonical upright orientation (x-z footprint).
    """
    if mesh.vertices.shape[0] == 0:
        raise ValueError("mesh is empty")
    xs = mesh.vertices[:, 0]
    zs = mesh.vertices[:, 2]
    return float(scale * scale * (xs.max() - xs.min()) * (zs.max() - zs.min()))


def scale_to_area(mesh: TriangleMesh, target_area: float) -> float:
    """Isotropic scale factor giving the mesh the target top-view box area."""
    if not target_area > 0:
        raise ValueError("target_area must be positive")
    base = top_view_area(mesh, 1.0)
    if base <= 0:
        raise ValueError("mesh has a zero-area footprint")
    return float(np.sqrt(target_area / base))
