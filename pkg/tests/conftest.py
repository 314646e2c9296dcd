import numpy as np
import pytest

from scene_align.geometry import CameraIntrinsics, DepthImage, GeocentricFrame

# Camera pitched 30 degrees down at the floor, like a sensor looking into a
# room; the principal ray meets the floor 3 m out.
PITCH = np.radians(30.0)


@pytest.fixture
def cam():
    return CameraIntrinsics(fx=200.0, fy=200.0, cx=80.0, cy=60.0, width=160, height=120)


@pytest.fixture
def cam_hi():
    return CameraIntrinsics(fx=400.0, fy=400.0, cx=160.0, cy=120.0, width=320, height=240)


@pytest.fixture
def frame():
    return GeocentricFrame(
        gravity=(0.0, -np.cos(PITCH), -np.sin(PITCH)), floor_height=-1.5
    )


def depth_from(arr) -> DepthImage:
    return DepthImage.from_meters(np.asarray(arr, dtype=np.float64))


def make_scene(cam, frame, mesh, placement, with_floor=True):
    """Self-rendered observation: the posed mesh composited over a floor plane.

    Returns (scene DepthImage, object mask).
    """
    from scene_align.mesh import floor_quad
    from scene_align.render import Placement, render

    obj = render(mesh, placement, frame, cam)
    if not with_floor:
        return obj.depth, obj.mask
    floor = render(floor_quad(12.0, frame.floor_height), Placement(1.0, 0.0, (0, 0, 0)), frame, cam)
    d_obj = np.where(obj.mask, obj.depth.values, np.inf)
    d_flr = np.where(floor.mask, floor.depth.values, np.inf)
    combined = np.minimum(d_obj, d_flr)
    valid = np.isfinite(combined)
    return DepthImage(np.where(valid, combined, 0.0), valid), obj.mask & (d_obj <= d_flr)
