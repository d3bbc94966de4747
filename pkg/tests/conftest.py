import math

import numpy as np
import pytest

from voxsplat.cameras import Camera, extrinsics_from, look_rotation
from voxsplat.gaussianize import gaussianize_ground_truth
from voxsplat.grid import GridGeometry, synth_scene
from voxsplat.renderer import render


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the numba kernels once so individual test timings stay honest
    geom = GridGeometry((2, 2, 2), (0.0, 0.0, 0.0), 1.0, 3, 0)
    grid = synth_scene(geom, "single_voxel", index=(0, 0, 0), cls=1)
    from voxsplat.cameras import make_bev_camera
    from voxsplat.renderer import RenderOptions

    gset = gaussianize_ground_truth(grid)
    cam = make_bev_camera(geom, 1.0)
    render(cam, gset)
    render(cam, gset, RenderOptions(record_trace=True))


@pytest.fixture
def unit_geom():
    return GridGeometry((8, 8, 8), (0.0, 0.0, 0.0), 1.0, 4, 0)


@pytest.fixture
def walls_grid(unit_geom):
    return synth_scene(unit_geom, "two_walls", front_x=2, back_x=6, classes=(1, 2))


def pinhole_at(eye, look_at, image_size=(48, 48), hfov_deg=60.0, depth_range=(0.1, 30.0)):
    """Helper camera aimed at a point, used across the suite."""
    w, h = image_size
    fx = w / (2.0 * math.tan(math.radians(hfov_deg / 2.0)))
    K = np.array([[fx, 0.0, w / 2.0], [0.0, fx, h / 2.0], [0.0, 0.0, 1.0]])
    eye = np.asarray(eye, dtype=np.float64)
    R = look_rotation(np.asarray(look_at, dtype=np.float64) - eye)
    return Camera(kind="pinhole", intrinsics=K, extrinsics=extrinsics_from(R, eye),
                  image_size=image_size, depth_range=depth_range)


@pytest.fixture
def side_camera():
    return pinhole_at((-6.0, 4.0, 6.0), (4.0, 4.0, 3.0))
