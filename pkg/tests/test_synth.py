import numpy as np
import pytest

from curvkit.geom import backproject
from curvkit.synth import *
from curvkit.util import CurvkitException


def test_primitive_validation():
    with pytest.raises(CurvkitException):
        Primitive('torus', Pose([0, 0, 1]), (1.0,))

    with pytest.raises(CurvkitException):
        Primitive('sphere', Pose([0, 0, 1]), (0.1, 0.2))

    with pytest.raises(CurvkitException):
        Primitive('box', Pose([0, 0, 1]), (0.1, -0.2, 0.1))

def test_scene_validation():
    with pytest.raises(CurvkitException):
        SceneSpec([])

    with pytest.raises(CurvkitException):
        SceneSpec([], background_depth=2.0, noise_sigma=-1.0)

def test_plane(camera):
    scene = SceneSpec([Primitive('plane', Pose([0.0, 0.0, 2.0]), (5.0, 5.0))])
    rgb, depth, normals, curv = render(scene, camera)

    assert depth.mask.all()
    assert np.allclose(depth.data, 2.0)
    assert np.allclose(normals.data, [0.0, 0.0, -1.0])
    assert not curv.k1.any() and not curv.k2.any()
    assert rgb.data.shape == (120, 160, 3)

def test_background_only(camera):
    _, depth, normals, _ = render(SceneSpec([], background_depth=4.0), camera)
    assert np.all(depth.data == 4.0)
    assert np.all(normals.data[..., 2] == -1.0)

def test_miss_is_invalid(camera):
    _, depth, normals, curv = render(SceneSpec([Primitive('sphere', Pose([0.0, 0.0, 1.0]), (0.1,))]), camera)

    assert not depth.mask[0, 0]
    assert not normals.mask[0, 0]
    assert not curv.mask[0, 0]
    assert depth.mask[60, 80]

def test_sphere(camera, sphere_scene):
    _, depth, normals, curv = render(sphere_scene, camera)
    sphere = depth.data < 2.0

    points = backproject(depth, camera).points[sphere]
    center = np.array([0.0, 0.0, 1.0])

    assert np.abs(np.linalg.norm(points - center, axis=1) - 0.25).max() < 1e-9
    assert np.allclose(curv.k1[sphere], 4.0)
    assert np.allclose(curv.k2[sphere], 4.0)
    assert np.allclose(normals.data[sphere], (points - center) / 0.25)

    # facing the camera
    facing = np.einsum('ij,ij->i', normals.data[sphere], points)
    assert np.all(facing < 0)

def test_cylinder_curvature(camera):
    scene = SceneSpec([Primitive('cylinder', Pose.from_euler([0.0, 0.0, 1.2], rz=30), (0.3, 0.4))])
    _, depth, _, curv = render(scene, camera)

    assert np.allclose(curv.k1[depth.mask], 1 / 0.3)
    assert np.allclose(curv.k2[depth.mask], 0.0)

def test_saddle_apex(apex_camera):
    scene = SceneSpec([Primitive('saddle', Pose([0.0, 0.0, 1.0]), (0.5, 0.3))], background_depth=3.0)
    _, depth, normals, curv = render(scene, apex_camera)

    assert depth.data[60, 80] == pytest.approx(1.0)
    assert np.allclose(normals.data[60, 80], [0.0, 0.0, -1.0])
    assert curv.k1[60, 80] == pytest.approx(2.0)
    assert curv.k2[60, 80] == pytest.approx(-2.0)

def test_box_faces(camera, box_scene):
    _, depth, normals, curv = render(box_scene, camera)

    assert depth.data[60, 80] == pytest.approx(1.4)
    assert np.allclose(normals.data[60, 80], [0.0, 0.0, -1.0])
    assert curv.k1[60, 80] == 0.0

def test_noise_depth_only(camera, sphere_scene):
    clean = render(sphere_scene, camera)
    sphere_scene.noise_sigma = 0.01
    noisy = render(sphere_scene, camera)

    assert not np.array_equal(clean[1].data, noisy[1].data)
    assert np.array_equal(clean[0].data, noisy[0].data)
    assert np.array_equal(clean[2].data, noisy[2].data)
    assert np.array_equal(clean[3].k1, noisy[3].k1)
    assert np.std(noisy[1].data - clean[1].data) == pytest.approx(0.01, rel=0.1)

def test_random_scene_deterministic():
    a = random_scene(42)
    b = random_scene(42)
    assert a.as_dict() == b.as_dict()
    assert 1 <= len(a.primitives) <= 3

def test_make_dataset(tiny_camera, tiny_dataset):
    assert len(tiny_dataset) == 6
    assert [x.sample_id for x in tiny_dataset][:2] == ['scene-0000', 'scene-0001']

    sample = tiny_dataset[0]
    assert sample.rgb.data.shape == (8, 8, 3)
    assert sample.depth.data.shape == (4, 4)
    assert sample.normals.data.shape == (4, 4, 3)
    assert sample.curvature.k1.shape == (4, 4)
    assert sample.intrinsics.width == 4
    assert sample.curvature_scale == 0.1

def test_make_dataset_deterministic(tiny_camera, tiny_dataset):
    again = make_dataset(6, tiny_camera, seed=3, input_res=(8, 8), target_res=(4, 4))

    for a, b in zip(tiny_dataset, again):
        assert a.seed == b.seed
        assert np.array_equal(a.rgb.data, b.rgb.data)
        assert np.array_equal(a.depth.data, b.depth.data)
        assert np.array_equal(a.curvature.k1, b.curvature.k1)

def test_make_dataset_scale(tiny_camera):
    scaled = make_dataset(2, tiny_camera, seed=5, input_res=(8, 8), target_res=(8, 8), scale=0.1)
    raw = make_dataset(2, tiny_camera, seed=5, input_res=(8, 8), target_res=(8, 8), scale=1.0)

    for a, b in zip(scaled, raw):
        assert np.allclose(a.curvature.k1, 0.1 * b.curvature.k1)
        assert np.allclose(a.unscaled_curvature().k2, b.curvature.k2)

def test_make_dataset_errors(tiny_camera):
    with pytest.raises(CurvkitException):
        make_dataset(0, tiny_camera)

    with pytest.raises(CurvkitException):
        make_dataset(1, tiny_camera, derive='magic')
