import numpy as np
import pytest

from scene_align.mesh import chair_mesh, box_mesh
from scene_align.render import ModelLibrary, Placement, top_view_area
from scene_align.synthgen import (
    CategoryStats,
    azimuth_bin,
    box_iou_2d,
    make_dataset,
    mask_bounding_box,
    sample_background_boxes,
    sample_scene,
    sample_training_boxes,
)

STATS = CategoryStats(mu_area=0.25, sigma_area=0.04, z_range=(2.0, 3.2))


class TestSampleScene:
    def test_zero_sigma_pins_footprint_area(self, cam, frame):
        mesh = chair_mesh()
        stats = CategoryStats(mu_area=0.3, sigma_area=0.0, z_range=(2.0, 3.0))
        for seed in range(5):
            s = sample_scene(mesh, stats, frame, cam, np.random.default_rng(seed))
            assert top_view_area(mesh, s.placement.scale) == pytest.approx(0.3, abs=1e-12)

    def test_resting_constraint(self, cam, frame):
        mesh = chair_mesh()
        for seed in range(5):
            s = sample_scene(mesh, STATS, frame, cam, np.random.default_rng(seed))
            placed = s.placement.apply(mesh.vertices)
            assert placed[:, 1].min() == pytest.approx(frame.floor_height, abs=1e-9)

    def test_empirical_mean_area(self, cam, frame):
        mesh = box_mesh(1, 1, 1)
        rng = np.random.default_rng(0)
        areas = []
        for _ in range(1000):
            s = sample_scene(mesh, STATS, frame, cam, rng)
            areas.append(top_view_area(mesh, s.placement.scale))
        # symmetric +/- 2 sigma truncation keeps the mean at mu
        sem = np.std(areas) / np.sqrt(len(areas))
        assert abs(np.mean(areas) - STATS.mu_area) < 3 * sem

    def test_object_visible_and_azimuth_matches_yaw(self, cam, frame):
        mesh = chair_mesh()
        s = sample_scene(mesh, STATS, frame, cam, np.random.default_rng(3))
        assert s.object_mask.any()
        assert s.azimuth == s.placement.yaw
        assert -np.pi < s.azimuth <= np.pi

    def test_degenerate_stats_rejected(self, cam, frame):
        bad = CategoryStats(mu_area=1e-9, sigma_area=1e-12, z_range=(2.0, 3.0))
        # mu so small every draw yields a sub-zero-ish area is not reachable:
        # instead use a mesh that cannot fit -> rejection exhausts on visibility
        with pytest.raises(ValueError):
            stats = CategoryStats(mu_area=0.25, sigma_area=0.01, z_range=(200.0, 300.0))
            sample_scene(chair_mesh(), stats, frame, cam, np.random.default_rng(0), max_tries=5)


class TestTrainingBoxes:
    def test_gt_box_itself_qualifies(self):
        assert box_iou_2d((10, 10, 30, 30), (10, 10, 30, 30)) == 1.0

    def test_half_shift_is_one_third(self):
        a = (0, 0, 20, 20)
        b = (10, 0, 30, 20)
        assert box_iou_2d(a, b) == pytest.approx(1.0 / 3.0)

    def test_all_sampled_boxes_above_threshold(self):
        rng = np.random.default_rng(7)
        gt = (40, 30, 90, 80)
        boxes = sample_training_boxes(gt, 50, rng)
        assert len(boxes) == 50
        for b in boxes:
            assert box_iou_2d(b, gt) > 0.7

    def test_background_boxes_below_threshold(self):
        rng = np.random.default_rng(8)
        gt = (40, 30, 90, 80)
        boxes = sample_background_boxes(gt, 160, 120, 20, rng)
        for b in boxes:
            assert box_iou_2d(b, gt) < 0.3

    def test_empty_gt_box_rejected(self):
        with pytest.raises(ValueError):
            sample_training_boxes((5, 5, 5, 9), 3, np.random.default_rng(0))


class TestAzimuthBin:
    def test_zero_maps_to_bin_zero(self):
        assert azimuth_bin(0.0, 8) == 0

    def test_pi_maps_to_middle_bin(self):
        assert azimuth_bin(np.pi, 8) == 4

    def test_bins_partition_without_overlap(self):
        n = 8
        thetas = np.linspace(-np.pi + 1e-9, np.pi, 1000)
        bins = [azimuth_bin(t, n) for t in thetas]
        assert set(bins) == set(range(n))
        # each theta maps to exactly one bin by construction; check wrap
        assert azimuth_bin(2 * np.pi, n) == 0
        assert azimuth_bin(-1e-12, n) in (0, n - 1)


class TestMakeDataset:
    def _library(self):
        lib = ModelLibrary()
        lib.add("chair", "chair_a", chair_mesh())
        return lib

    def test_foreground_count(self, cam, frame):
        examples = make_dataset(
            self._library(),
            {"chair": STATS},
            frame,
            cam,
            seed=1,
            models_per_cat=1,
            poses_per_model=10,
            boxes_per_pose=5,
            background_per_pose=0,
            crop_size=24,
        )
        fg = [e for e in examples if e.label < 8]
        assert len(fg) == 50
        assert len(examples) == 50

    def test_deterministic_given_seed(self, cam, frame):
        kw = dict(models_per_cat=1, poses_per_model=2, boxes_per_pose=2, background_per_pose=1, crop_size=24)
        a = make_dataset(self._library(), {"chair": STATS}, frame, cam, seed=5, **kw)
        b = make_dataset(self._library(), {"chair": STATS}, frame, cam, seed=5, **kw)
        assert len(a) == len(b)
        for ea, eb in zip(a, b):
            np.testing.assert_array_equal(ea.crop.channels, eb.crop.channels)
            np.testing.assert_array_equal(ea.crop.valid, eb.crop.valid)
            assert ea.label == eb.label and ea.theta_gt == eb.theta_gt

    def test_labels_match_azimuth_and_foreground_crops_valid(self, cam, frame):
        examples = make_dataset(
            self._library(),
            {"chair": STATS},
            frame,
            cam,
            seed=2,
            models_per_cat=2,
            poses_per_model=3,
            boxes_per_pose=2,
            background_per_pose=1,
            crop_size=24,
        )
        fg = [e for e in examples if e.label < 8]
        bg = [e for e in examples if e.label == 8]
        assert fg and bg
        for e in fg:
            assert e.label == azimuth_bin(e.theta_gt, 8)
            assert e.crop.valid.any()

    def test_missing_stats_category_raises(self, cam, frame):
        with pytest.raises(KeyError):
            make_dataset(self._library(), {}, frame, cam, seed=0, models_per_cat=1, poses_per_model=1)


class TestMaskBoundingBox:
    def test_simple(self):
        m = np.zeros((10, 12), bool)
        m[2:5, 3:9] = True
        assert mask_bounding_box(m) == (3, 2, 9, 5)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            mask_bounding_box(np.zeros((4, 4), bool))
