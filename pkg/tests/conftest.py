
import numpy as np
import pytest

from curvkit.geom import CameraIntrinsics
from curvkit.quadric import PatchSpec
from curvkit.synth import Pose, Primitive, SceneSpec, make_dataset


@pytest.fixture
def camera():
    # centered principal point so horizontal flips are exact
    return CameraIntrinsics(145, 145, 79.5, 59.5, 160, 120)

@pytest.fixture
def apex_camera():
    # principal point on a pixel center, the optical axis hits pixel (80, 60)
    return CameraIntrinsics(145, 145, 80, 60, 160, 120)

@pytest.fixture
def patch():
    return PatchSpec(radius_px=6, min_samples=12)

@pytest.fixture
def sphere_scene():
    return SceneSpec([Primitive('sphere', Pose([0.0, 0.0, 1.0]), (0.25,))], background_depth=3.0)

@pytest.fixture
def box_scene():
    return SceneSpec([Primitive('box', Pose([0.0, 0.0, 1.5]), (0.3, 0.2, 0.1), albedo=(0.9, 0.3, 0.2))], background_depth=3.0)

@pytest.fixture
def tiny_camera():
    return CameraIntrinsics(40, 40, 15.5, 15.5, 32, 32)

@pytest.fixture
def tiny_dataset(tiny_camera):
    # 8x8 RGB, 4x4 targets
    return make_dataset(6, tiny_camera, seed=3, input_res=(8, 8), target_res=(4, 4))

@pytest.fixture
def rng():
    return np.random.default_rng(1234)
