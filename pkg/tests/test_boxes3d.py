import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scene_align.boxes3d import (
    OrientedBox3D,
    box_from_model,
    box_from_segment,
    box_iou3d,
    clip_polygon,
    min_area_rect,
    polygon_area,
)
from scene_align.geometry import CameraIntrinsics, DepthImage, GeocentricFrame, project
from scene_align.mesh import box_mesh
from scene_align.render import Placement


def rot2d(a):
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def yaw_rot_xz(points_xz, yaw):
    """Rotate top-view (x, z) points by a yaw, matching Placement's convention."""
    c, s = np.cos(yaw), np.sin(yaw)
    x, z = points_xz[:, 0], points_xz[:, 1]
    return np.column_stack([x * c + z * s, -x * s + z * c])


def grid_min_area(pts, step_deg=0.01):
    """Dense-grid oracle: min AABB area over yaw in [0, 90)."""
    best = np.inf
    for yaw in np.arange(0.0, 90.0, step_deg):
        r = np.radians(yaw)
        c, s = np.cos(r), np.sin(r)
        u = pts[:, 0] * c - pts[:, 1] * s
        v = pts[:, 0] * s + pts[:, 1] * c
        area = (u.max() - u.min()) * (v.max() - v.min())
        if area < best:
            best = area
    return best


class TestMinAreaRect:
    def test_axis_aligned_rectangle(self):
        pts = np.array([[1.0, 0.5], [-1.0, 0.5], [-1.0, -0.5], [1.0, -0.5]])
        yaw, center, half = min_area_rect(pts)
        assert yaw == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(center, [0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(half, [1.0, 0.5], atol=1e-12)

    def test_rotated_rectangle_equivariance(self):
        base = np.array([[1.0, 0.5], [-1.0, 0.5], [-1.0, -0.5], [1.0, -0.5]])
        pts = yaw_rot_xz(base, np.radians(30.0))
        yaw, _, half = min_area_rect(pts)
        assert yaw == pytest.approx(np.radians(30.0), abs=1e-6)
        np.testing.assert_allclose(half, [1.0, 0.5], atol=1e-9)

    def test_beats_dense_grid(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            pts = rng.standard_normal((50, 2))
            yaw, _, half = min_area_rect(pts)
            area = 4.0 * half[0] * half[1]
            oracle = grid_min_area(pts, step_deg=0.05)
            assert area <= oracle * (1.0 + 1e-9)

    def test_single_point_degenerate(self):
        yaw, center, half = min_area_rect(np.array([[2.0, 3.0]]))
        np.testing.assert_allclose(center, [2.0, 3.0])
        assert (half == 5e-7).all()

    def test_collinear_points_widened(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        yaw, _, half = min_area_rect(pts)
        assert half.min() == pytest.approx(5e-7)
        assert half.max() == pytest.approx(np.sqrt(2.0), abs=1e-9)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_never_beaten_by_axis_aligned_box(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-3, 3, (12, 2))
        _, _, half = min_area_rect(pts)
        aabb = (pts[:, 0].max() - pts[:, 0].min()) * (pts[:, 1].max() - pts[:, 1].min())
        assert 4.0 * half[0] * half[1] <= aabb + 1e-9

    def test_returned_box_contains_points(self):
        rng = np.random.default_rng(4)
        pts = rng.standard_normal((40, 2))
        yaw, center, half = min_area_rect(pts)
        c, s = np.cos(yaw), np.sin(yaw)
        rel = pts - center
        u = rel[:, 0] * c - rel[:, 1] * s
        v = rel[:, 0] * s + rel[:, 1] * c
        assert (np.abs(u) <= half[0] + 1e-9).all()
        assert (np.abs(v) <= half[1] + 1e-9).all()


def sample_cuboid_surface(rng, size, n):
    """Uniform points on the surface of an origin-centered cuboid."""
    sx, sy, sz = size
    areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.random(n) - 0.5
    v = rng.random(n) - 0.5
    pts = np.empty((n, 3))
    for f, (axis, sign) in enumerate([(0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)]):
        sel = face == f
        others = [i for i in range(3) if i != axis]
        pts[sel, axis] = sign * size[axis] / 2.0
        pts[sel, others[0]] = u[sel] * size[others[0]]
        pts[sel, others[1]] = v[sel] * size[others[1]]
    return pts


def cuboid_scene(frame, cam, center_world, size, yaw=0.3, n=4000, seed=0, outlier_frac=0.0):
    """Depth image sampling a world-frame cuboid's surface points."""
    rng = np.random.default_rng(seed)
    pts = center_world + sample_cuboid_surface(rng, np.asarray(size, float), n)
    pts = (pts - center_world) @ rot2d_yaw(yaw).T + center_world
    if outlier_frac > 0:
        n_out = int(n * outlier_frac)
        pts[:n_out] += rng.uniform(3.0, 6.0, (n_out, 3))
    cam_pts = frame.to_camera(pts)
    uv, in_front = project(cam_pts, cam)
    d = np.zeros((cam.height, cam.width))
    cols = np.round(uv[:, 0]).astype(int)
    rows = np.round(uv[:, 1]).astype(int)
    ok = in_front & (cols >= 0) & (cols < cam.width) & (rows >= 0) & (rows < cam.height)
    d[rows[ok], cols[ok]] = cam_pts[ok, 2]
    return DepthImage.from_meters(d), d > 0


def rot2d_yaw(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


class TestBoxFromSegment:
    def _frame(self):
        return GeocentricFrame(gravity=(0.0, -np.cos(0.5), -np.sin(0.5)), floor_height=-1.4)

    def _cam(self):
        return CameraIntrinsics(fx=300.0, fy=300.0, cx=120.0, cy=90.0, width=240, height=180)

    def _center(self, frame):
        c = frame.to_world(np.array([[0.0, 0.0, 2.8]]))[0]
        c[1] = frame.floor_height + 0.3
        return c

    def test_clean_cloud_delta_zero_recovers_box(self):
        frame, cam = self._frame(), self._cam()
        center = self._center(frame)
        depth, mask = cuboid_scene(frame, cam, center, (0.8, 0.6, 0.5), yaw=0.0, seed=1)
        box = box_from_segment(mask, depth, cam, frame, delta=0.0)
        # bottom rests on the floor by construction of the box contract
        assert box.y_range[0] == pytest.approx(frame.floor_height, abs=1e-9)
        assert box.y_range[1] == pytest.approx(center[1] + 0.3, abs=0.02)
        assert sorted(box.half_extents[[0, 2]]) == pytest.approx([0.25, 0.4], abs=0.02)

    def test_outlier_robustness_with_delta_two(self):
        frame, cam = self._frame(), self._cam()
        center = self._center(frame)
        clean_d, clean_m = cuboid_scene(frame, cam, center, (0.8, 0.6, 0.5), yaw=0.2, seed=2)
        noisy_d, noisy_m = cuboid_scene(frame, cam, center, (0.8, 0.6, 0.5), yaw=0.2, seed=2, outlier_frac=0.01)
        clean = box_from_segment(clean_m, clean_d, cam, frame, delta=0.0)
        robust = box_from_segment(noisy_m, noisy_d, cam, frame, delta=2.0)
        assert abs(robust.volume - clean.volume) / clean.volume < 0.02

    def test_bottom_rests_on_floor(self):
        frame, cam = self._frame(), self._cam()
        depth, mask = cuboid_scene(frame, cam, self._center(frame), (0.5, 0.4, 0.5), seed=3)
        box = box_from_segment(mask, depth, cam, frame)
        assert box.y_range[0] == pytest.approx(frame.floor_height, abs=1e-12)

    def test_empty_mask_raises(self):
        frame, cam = self._frame(), self._cam()
        d = DepthImage.from_meters(np.zeros((cam.height, cam.width)))
        with pytest.raises(ValueError):
            box_from_segment(np.zeros((cam.height, cam.width), bool), d, cam, frame)


class TestBoxFromModel:
    def test_unit_cube_identity(self):
        box = box_from_model(box_mesh(1, 1, 1), Placement(1.0, 0.0, (0, 0, 0)))
        np.testing.assert_allclose(box.half_extents, 0.5)
        np.testing.assert_allclose(box.center, 0.0, atol=1e-12)

    def test_scale_doubles_extents(self):
        box = box_from_model(box_mesh(1, 1, 1), Placement(2.0, 0.0, (0, 0, 0)))
        np.testing.assert_allclose(box.half_extents, 1.0)

    def test_translation_moves_center(self):
        t = np.array([0.3, -0.1, 2.0])
        box = box_from_model(box_mesh(1, 1, 1), Placement(1.0, 0.0, t))
        np.testing.assert_allclose(box.center, t, atol=1e-12)

    def test_yawed_box_is_tight(self):
        box = box_from_model(box_mesh(2, 1, 1), Placement(1.0, 0.7, (0, 0, 0)))
        assert box.yaw == pytest.approx(0.7)
        np.testing.assert_allclose(box.half_extents, [1.0, 0.5, 0.5], atol=1e-12)

    def test_footprint_contains_posed_vertices(self):
        from scene_align.mesh import chair_mesh

        placement = Placement(1.3, 0.9, (0.4, -0.2, 2.0))
        mesh = chair_mesh()
        box = box_from_model(mesh, placement)
        w = placement.apply(mesh.vertices)
        corners = box.footprint_corners()
        # check containment in the box frame
        c, s = np.cos(box.yaw), np.sin(box.yaw)
        rel = w[:, [0, 2]] - box.center[[0, 2]]
        u = rel[:, 0] * c - rel[:, 1] * s
        v = rel[:, 0] * s + rel[:, 1] * c
        assert (np.abs(u) <= box.half_extents[0] + 1e-9).all()
        assert (np.abs(v) <= box.half_extents[2] + 1e-9).all()
        # the corner polygon must have the box footprint's area
        assert polygon_area(corners) == pytest.approx(4 * box.half_extents[0] * box.half_extents[2])


class TestBoxIoU3D:
    def _unit_box(self, center, yaw=0.0):
        return OrientedBox3D(yaw, np.asarray(center, float), np.array([0.5, 0.5, 0.5]))

    def test_identical_boxes(self):
        a = self._unit_box([0, 0, 0], yaw=0.4)
        assert box_iou3d(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_boxes(self):
        assert box_iou3d(self._unit_box([0, 0, 0]), self._unit_box([5, 0, 0])) == 0.0
        assert box_iou3d(self._unit_box([0, 0, 0]), self._unit_box([0, 5, 0])) == 0.0

    def test_half_offset_cubes(self):
        iou = box_iou3d(self._unit_box([0, 0, 0]), self._unit_box([0.5, 0, 0]))
        assert iou == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_symmetry_and_rigid_invariance(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            a = OrientedBox3D(rng.uniform(-np.pi, np.pi), rng.uniform(-1, 1, 3), rng.uniform(0.2, 1.0, 3))
            b = OrientedBox3D(rng.uniform(-np.pi, np.pi), rng.uniform(-1, 1, 3), rng.uniform(0.2, 1.0, 3))
            iou_ab = box_iou3d(a, b)
            assert iou_ab == pytest.approx(box_iou3d(b, a), abs=1e-12)
            dyaw = rng.uniform(-1, 1)
            shift = rng.uniform(-2, 2, 3)
            moved = []
            for box in (a, b):
                c_xz = yaw_rot_xz(box.center[[0, 2]][None, :], dyaw)[0]
                center = np.array([c_xz[0], box.center[1], c_xz[1]]) + shift
                moved.append(OrientedBox3D(box.yaw + dyaw, center, box.half_extents))
            assert box_iou3d(*moved) == pytest.approx(iou_ab, abs=1e-9)

    def test_matches_monte_carlo_volume(self):
        rng = np.random.default_rng(7)
        a = OrientedBox3D(0.3, np.array([0.0, 0.0, 0.0]), np.array([0.6, 0.5, 0.4]))
        b = OrientedBox3D(-0.5, np.array([0.3, 0.1, -0.2]), np.array([0.5, 0.45, 0.55]))
        samples = rng.uniform(-1.5, 1.5, (200_000, 3))

        def inside(box, p):
            rel = p - box.center
            c, s = np.cos(box.yaw), np.sin(box.yaw)
            u = rel[:, 0] * c - rel[:, 2] * s
            v = rel[:, 0] * s + rel[:, 2] * c
            return (
                (np.abs(u) <= box.half_extents[0])
                & (np.abs(rel[:, 1]) <= box.half_extents[1])
                & (np.abs(v) <= box.half_extents[2])
            )

        vol = 3.0**3
        inter_mc = inside(a, samples) & inside(b, samples)
        inter_est = inter_mc.mean() * vol
        union_est = (inside(a, samples) | inside(b, samples)).mean() * vol
        iou_mc = inter_est / union_est
        assert box_iou3d(a, b) == pytest.approx(iou_mc, abs=0.01)


class TestClipPolygon:
    def test_full_containment(self):
        small = np.array([[0.2, 0.2], [-0.2, 0.2], [-0.2, -0.2], [0.2, -0.2]])
        big = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float)
        np.testing.assert_allclose(polygon_area(clip_polygon(small, big)), 0.16, atol=1e-12)

    def test_no_overlap(self):
        a = np.array([[3, 3], [2, 3], [2, 2], [3, 2]], dtype=float)
        b = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float)
        assert polygon_area(clip_polygon(a, b)) == 0.0
