import numpy as np
import pytest

from scene_align.boxes3d import OrientedBox3D
from scene_align.fileio import (
    box_from_record,
    box_record,
    dump_json,
    load_camera_json,
    load_dataset,
    load_depth_png,
    load_detections,
    load_library_manifest,
    load_mask_png,
    load_normal_png,
    load_selector_weights,
    load_stats_json,
    save_camera_json,
    save_dataset,
    save_depth_png,
    save_mask_png,
    save_normal_png,
    save_selector_weights,
)
from scene_align.geometry import NormalImage
from scene_align.mesh import chair_mesh, save_obj
from scene_align.select import default_selector_weights
from scene_align.synthgen import CategoryStats, make_dataset
from scene_align.render import ModelLibrary

from conftest import depth_from


class TestDepthPng:
    def test_roundtrip_millimeter_quantized(self, tmp_path):
        rng = np.random.default_rng(0)
        d = rng.uniform(0.5, 5.0, (32, 40))
        d[5:8, 5:8] = 0.0  # missing
        depth = depth_from(d)
        p = tmp_path / "d.png"
        save_depth_png(depth, p)
        loaded = load_depth_png(p)
        np.testing.assert_array_equal(loaded.valid, depth.valid)
        np.testing.assert_allclose(loaded.values[loaded.valid], depth.values[depth.valid], atol=5e-4 + 1e-9)

    def test_zero_stays_missing(self, tmp_path):
        depth = depth_from(np.zeros((4, 4)))
        p = tmp_path / "z.png"
        save_depth_png(depth, p)
        assert not load_depth_png(p).valid.any()


class TestMaskAndNormalPng:
    def test_mask_roundtrip(self, tmp_path):
        mask = np.random.default_rng(1).random((20, 30)) > 0.5
        p = tmp_path / "m.png"
        save_mask_png(mask, p)
        np.testing.assert_array_equal(load_mask_png(p), mask)

    def test_normal_image_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        ch = rng.integers(38, 219, (16, 16, 3)).astype(np.uint8)
        valid = rng.random((16, 16)) > 0.3
        ch[~valid] = 0
        img = NormalImage(ch, valid)
        p = tmp_path / "n.png"
        save_normal_png(img, p)
        loaded = load_normal_png(p)
        np.testing.assert_array_equal(loaded.channels, img.channels)
        np.testing.assert_array_equal(loaded.valid, img.valid)
        assert (tmp_path / "n_valid.png").exists()


class TestCameraJson:
    def test_roundtrip(self, tmp_path, cam, frame):
        p = tmp_path / "cam.json"
        save_camera_json(cam, frame, p)
        k2, f2 = load_camera_json(p)
        assert k2 == cam
        np.testing.assert_allclose(f2.gravity, frame.gravity)
        assert f2.floor_height == frame.floor_height

    def test_deterministic_bytes(self, tmp_path, cam, frame):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_camera_json(cam, frame, p1)
        save_camera_json(cam, frame, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestStatsAndManifest:
    def test_stats(self, tmp_path):
        p = tmp_path / "stats.json"
        dump_json({"chair": {"mu_area": 0.25, "sigma_area": 0.05, "z_range": [1.5, 3.0]}}, p)
        stats = load_stats_json(p)
        assert stats["chair"] == CategoryStats(0.25, 0.05, (1.5, 3.0))

    def test_manifest_with_front_normalization(self, tmp_path):
        mesh = chair_mesh()
        save_obj(mesh, tmp_path / "chair.obj")
        dump_json(
            [{"category": "chair", "name": "a", "path": "chair.obj", "front": [0.0, 0.0, -1.0]}],
            tmp_path / "manifest.json",
        )
        lib = load_library_manifest(tmp_path / "manifest.json")
        rotated = lib.get("chair", "a")
        # the declared front (0,0,-1) must point along +x after loading;
        # the rotation maps original +x onto +z
        orig = mesh.vertices
        np.testing.assert_allclose(np.sort(rotated.vertices[:, 2]), np.sort(orig[:, 0]), atol=1e-12)
        from scene_align.mesh import yaw_matrix

        heading = np.arctan2(1.0, 0.0)  # azimuth of (0, 0, -1)
        front_after = yaw_matrix(-heading) @ np.array([0.0, 0.0, -1.0])
        np.testing.assert_allclose(front_after, [1.0, 0.0, 0.0], atol=1e-12)


class TestDatasetIO:
    def test_roundtrip(self, tmp_path, cam, frame):
        lib = ModelLibrary()
        lib.add("chair", "a", chair_mesh())
        stats = {"chair": CategoryStats(0.25, 0.03, (2.0, 3.0))}
        examples = make_dataset(
            lib, stats, frame, cam, seed=3, models_per_cat=1, poses_per_model=2,
            boxes_per_pose=2, background_per_pose=1, crop_size=16,
        )
        index = save_dataset(examples, tmp_path / "ds")
        x, labels, cats, categories, thetas = load_dataset(index)
        assert x.shape == (len(examples), 3, 16, 16)
        assert categories == ["chair"]
        np.testing.assert_array_equal(labels, [e.label for e in examples])
        np.testing.assert_allclose(thetas, [e.theta_gt for e in examples])
        # normalization maps byte 128 to 0
        assert x.max() <= (255 - 128) / 128 + 1e-12

    def test_empty_index_raises(self, tmp_path):
        p = tmp_path / "index.jsonl"
        p.write_text("")
        with pytest.raises(ValueError):
            load_dataset(p)


class TestRecords:
    def test_box_record_roundtrip(self):
        b = OrientedBox3D(0.4, np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.6, 0.7]))
        b2 = box_from_record(box_record(b))
        assert b2.yaw == b.yaw
        np.testing.assert_array_equal(b2.center, b.center)
        np.testing.assert_array_equal(b2.half_extents, b.half_extents)

    def test_selector_weights_roundtrip(self, tmp_path):
        w = default_selector_weights()
        p = tmp_path / "sel.json"
        save_selector_weights(w, p)
        w2 = load_selector_weights(p)
        np.testing.assert_array_equal(w2.weights, w.weights)
        assert w2.bias == w.bias

    def test_detections_with_pose_bins(self, tmp_path):
        mask = np.zeros((10, 10), bool)
        mask[2:6, 3:7] = True
        save_mask_png(mask, tmp_path / "m.png")
        dump_json(
            [{"category": "chair", "score": 0.9, "mask_png_path": "m.png", "pose_bins": [2, 5]}],
            tmp_path / "det.json",
        )
        dets = load_detections(tmp_path / "det.json")
        assert dets[0]["pose_bins"] == [2, 5]
        np.testing.assert_array_equal(dets[0]["mask"], mask)
