"""Triangle meshes: OBJ loading, canonical orientation, simple primitives.

Model frame convention: +y is up, the ground plane is x-z, and the canonical
front of the model points along +x. Meshes whose manifest declares a
different front direction are rotated about +y at load time so azimuth zero
means "front facing world +x" for every model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FRONT_X = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class TriangleMesh:
    """Vertices (v, 3) in meters and triangle index triples (t, 3)."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if verts.size and not np.isfinite(verts).all():
            raise ValueError("vertex coordinates must be finite")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise ValueError("triangle indices out of range")
        tris = _drop_degenerate(verts, tris)
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def transformed(self, matrix: np.ndarray, offset=(0.0, 0.0, 0.0)) -> "TriangleMesh":
        return TriangleMesh(self.vertices @ np.asarray(matrix).T + np.asarray(offset, dtype=np.float64), self.triangles)


def _drop_degenerate(verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    if tris.size == 0:
        return tris
    a = verts[tris[:, 0]]
    cross = np.cross(verts[tris[:, 1]] - a, verts[tris[:, 2]] - a)
    return tris[np.linalg.norm(cross, axis=1) > 0.0]


def yaw_matrix(theta: float) -> np.ndarray:
    """Right-handed rotation by theta about the +y (up) axis."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def orient_front_to_x(mesh: TriangleMesh, front) -> TriangleMesh:
    """Rotate a mesh about +y so its declared front direction becomes +x."""
    f = np.asarray(front, dtype=np.float64).reshape(3)
    fx, fz = f[0], f[2]
    if fx * fx + fz * fz < 1e-12:
        raise ValueError("front direction must have a horizontal component")
    heading = np.arctan2(-fz, fx)
    if heading == 0.0:
        return mesh
    return mesh.transformed(yaw_matrix(-heading))


def load_obj(path) -> TriangleMesh:
    """Load the v/f subset of a Wavefront OBJ; polygons are fan-triangulated."""
    verts: list[list[float]] = []
    tris: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                for i in range(1, len(idx) - 1):
                    tris.append([idx[0], idx[i], idx[i + 1]])
    if not verts:
        raise ValueError(f"no vertices in OBJ file: {path}")
    return TriangleMesh(np.asarray(verts), np.asarray(tris, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def box_mesh(size_x: float, size_y: float, size_z: float, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box, 12 triangles, centered at ``center``."""
    hx, hy, hz = size_x / 2.0, size_y / 2.0, size_z / 2.0
    cx, cy, cz = center
    corners = np.array(
        [
            [cx - hx, cy - hy, cz - hz],
            [cx + hx, cy - hy, cz - hz],
            [cx + hx, cy + hy, cz - hz],
            [cx - hx, cy + hy, cz - hz],
            [cx - hx, cy - hy, cz + hz],
            [cx + hx, cy - hy, cz + hz],
            [cx + hx, cy + hy, cz + hz],
            [cx - hx, cy + hy, cz + hz],
        ]
    )
    quads = [
        (0, 1, 2, 3),
        (5, 4, 7, 6),
        (4, 0, 3, 7),
        (1, 5, 6, 2),
        (3, 2, 6, 7),
        (4, 5, 1, 0),
    ]
    tris = []
    for a, b, c, d in quads:
        tris.append([a, b, c])
        tris.append([a, c, d])
    return TriangleMesh(corners, np.asarray(tris, dtype=np.int64))


def merge_meshes(meshes) -> TriangleMesh:
    verts = []
    tris = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += m.vertices.shape[0]
    return TriangleMesh(np.vstack(verts), np.vstack(tris))


def chair_mesh(seat: float = 0.5, height: float = 0.45, back_height: float = 0.5) -> TriangleMesh:
    """Chair-like composite: seat slab, back panel at -x, four legs.

    Deliberately 180-degree asymmetric in the top view, resting on y = 0,
    front (the open side) facing +x.
    """
    slab = 0.06
    leg = 0.05
    parts = [
        box_mesh(seat, slab, seat, center=(0.0, height - slab / 2.0, 0.0)),
        box_mesh(slab, back_height, seat, center=(-(seat - slab) / 2.0, height + back_height / 2.0, 0.0)),
    ]
    off = (seat - leg) / 2.0
    for sx in (-off, off):
        for sz in (-off, off):
            parts.append(box_mesh(leg, height - slab, leg, center=(sx, (height - slab) / 2.0, sz)))
    return merge_meshes(parts)


def table_mesh(top_x: float = 0.9, top_z: float = 0.6, height: float = 0.7) -> TriangleMesh:
    """Table-like composite: top slab plus four corner legs, resting on y = 0."""
    slab = 0.05
    leg = 0.06
    parts = [box_mesh(top_x, slab, top_z, center=(0.0, height - slab / 2.0, 0.0))]
    ox = (top_x - leg) / 2.0
    oz = (top_z - leg) / 2.0
    for sx in (-ox, ox):
        for sz in (-oz, oz):
            parts.append(box_mesh(leg, height - slab, leg, center=(sx, (height - slab) / 2.0, sz)))
    return merge_meshes(parts)


def chamfered_box_mesh(
    size_x: float = 0.55,
    size_y: float = 0.6,
    size_z: float = 0.45,
    chamfer: float = 0.12,
) -> TriangleMesh:
    """Upright box with 45-degree chamfered vertical corners, resting on y = 0.

    The octagonal footprint keeps at least two distinct horizontal face
    normals visible from any viewing direction, which makes the piece a
    well-conditioned registration target.
    """
    hx, hz = size_x / 2.0, size_z / 2.0
    c = min(chamfer, 0.9 * min(hx, hz))
    ring = np.array(
        [
            [hx - c, -hz],
            [hx, -hz + c],
            [hx, hz - c],
            [hx - c, hz],
            [-hx + c, hz],
            [-hx, hz - c],
            [-hx, -hz + c],
            [-hx + c, -hz],
        ]
    )
    bottom = np.column_stack([ring[:, 0], np.zeros(8), ring[:, 1]])
    top = np.column_stack([ring[:, 0], np.full(8, size_y), ring[:, 1]])
    verts = np.vstack([bottom, top])
    tris = []
    for i in range(8):
        j = (i + 1) % 8
        tris.append([i, j, 8 + j])
        tris.append([i, 8 + j, 8 + i])
    for i in range(1, 7):
        tris.append([0, i, i + 1])  # bottom fan
        tris.append([8, 8 + i, 8 + i + 1])  # top fan
    return TriangleMesh(verts, np.asarray(tris, dtype=np.int64))


def dresser_mesh(
    size_x: float = 0.6,
    size_y: float = 0.5,
    size_z: float = 0.45,
    chamfer: float = 0.14,
    board_height: float = 0.4,
) -> TriangleMesh:
    """Chamfered dresser body with a gallery board along its -x edge.

    The chamfered corners keep several horizontal surface normals visible
    from any direction and the off-center board breaks the 180-degree
    footprint symmetry; resting on y = 0, front facing +x.
    """
    body = chamfered_box_mesh(size_x, size_y, size_z, chamfer=chamfer)
    board = box_mesh(
        0.1, board_height, 0.85 * size_z, center=(-(size_x - 0.12) / 2.0, size_y + board_height / 2.0, 0.0)
    )
    return merge_meshes([body, board])


def floor_quad(half_extent: float, height: float = 0.0) -> TriangleMesh:
    """Horizontal square at world height ``height`` (used behind rendered scenes)."""
    h = half_extent
    verts = np.array(
        [[-h, height, -h], [h, height, -h], [h, height, h], [-h, height, h]]
    )
    return TriangleMesh(verts, np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int64))
