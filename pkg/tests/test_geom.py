import numpy as np
import pytest

from curvkit.geom import *
from curvkit.util import CurvkitException


def test_intrinsics_validation():
    with pytest.raises(CurvkitException):
        CameraIntrinsics(0, 580, 320, 240, 640, 480)

    with pytest.raises(CurvkitException):
        CameraIntrinsics(580, 580, 700, 240, 640, 480)

def test_intrinsics_resized(camera):
    half = camera.resized(80, 60)
    assert half.fx == pytest.approx(72.5)
    assert half.cx == pytest.approx(39.5)
    assert half.cy == pytest.approx(29.5)
    assert half.shape == (60, 80)

def test_rays_unit_z(camera):
    rays = camera.rays()
    assert rays.shape == (120, 160, 3)
    assert np.all(rays[..., 2] == 1.0)
    assert rays[0, 0, 0] == pytest.approx(-79.5 / 145)

def test_depth_mask():
    depth = DepthMap([[1.0, 0.0], [np.nan, -2.0]])
    assert depth.mask.tolist() == [[True, False], [False, False]]
    assert depth.data[1, 0] == 0.0

    with pytest.raises(ValueError):
        depth.data[0, 0] = 5.0

def test_depth_log():
    depth = DepthMap([[1.0, np.e], [0.0, 2.0]])
    assert np.allclose(depth.log(), [[0.0, 1.0], [0.0, np.log(2.0)]])

def test_normals_unit():
    with pytest.raises(CurvkitException):
        NormalMap(np.full((2, 2, 3), 0.5))

    normals = NormalMap.normalized(np.full((2, 2, 3), 0.5))
    assert np.allclose(np.linalg.norm(normals.data, axis=2), 1.0)

    normals = NormalMap.normalized(np.zeros((2, 2, 3)))
    assert not normals.mask.any()

def test_normals_oriented(camera):
    away = NormalMap(np.tile([0.0, 0.0, 1.0], (120, 160, 1)))
    facing = away.oriented(camera)
    assert np.all(facing.data[..., 2] == -1.0)

def test_curvature_sorted_clamped():
    with pytest.raises(CurvkitException):
        CurvatureMap([[0.0]], [[1.0]])

    with pytest.raises(CurvkitException):
        CurvatureMap([[150.0]], [[0.0]])

    curv = CurvatureMap.from_pair([[0.0, -300.0]], [[1.0, 5.0]])
    assert curv.k1.tolist() == [[1.0, 5.0]]
    assert curv.k2.tolist() == [[0.0, -100.0]]

def test_curvature_accessors():
    curv = CurvatureMap([[4.0]], [[-2.0]])
    assert curv.mean_curvature()[0, 0] == 1.0
    assert curv.gaussian_curvature()[0, 0] == -8.0
    assert curv.scaled(0.1).k1[0, 0] == pytest.approx(0.4)

def test_rgb_range():
    with pytest.raises(CurvkitException):
        RgbImage(np.full((2, 2, 3), 1.5))

    rgb = RgbImage(np.ones((2, 2, 3)))
    assert np.allclose(rgb.luminance(), 1.0)

def test_backproject_project_round_trip(camera, rng):
    depth = DepthMap(rng.uniform(0.5, 4.0, camera.shape))
    cloud = backproject(depth, camera)
    u, v = project(cloud, camera)
    vv, uu = np.mgrid[0:camera.height, 0:camera.width]

    assert np.abs(u - uu).max() < 1e-9
    assert np.abs(v - vv).max() < 1e-9
    assert np.allclose(cloud.points[..., 2], depth.data)

def test_backproject_size_mismatch(camera):
    with pytest.raises(CurvkitException):
        backproject(DepthMap(np.ones((10, 10))), camera)

def test_project_invalid_is_nan(camera):
    data = np.ones(camera.shape)
    data[3, 4] = 0.0
    u, v = project(backproject(DepthMap(data), camera), camera)
    assert np.isnan(u[3, 4]) and np.isnan(v[3, 4])
    assert np.isfinite(u[0, 0])

@pytest.mark.parametrize('size', [(8, 6), (32, 24), (16, 12), (21, 5)])
def test_bicubic_exact_on_affine(size):
    yy, xx = np.mgrid[0:12, 0:16].astype(float)
    values = 2.0 + 0.5 * xx + 0.25 * yy

    out, mask = resample_bicubic(values, *size)
    width, height = size
    x = (np.arange(width) + 0.5) * 16 / width - 0.5
    y = (np.arange(height) + 0.5) * 12 / height - 0.5
    expected = 2.0 + 0.5 * x[None, :] + 0.25 * y[:, None]

    assert mask.all()
    assert np.abs(out - expected).max() < 1e-9

def test_bicubic_identity_size(rng):
    values = rng.random((9, 7, 3))
    out, mask = resample_bicubic(values, 7, 9)
    assert mask.all()
    assert np.abs(out - values).max() < 1e-12

def test_bicubic_mask_propagates():
    mask = np.ones((12, 12), dtype=bool)
    mask[5, 5] = False
    out, out_mask = resample_bicubic(np.ones((12, 12)), 12, 12, mask)

    assert not out_mask[5, 5]
    assert not out_mask[3, 6]
    assert out_mask[0, 0]
    assert out_mask[11, 11]
    assert out[5, 5] == 0.0

@pytest.mark.parametrize('shape,size', [((12, 12), (0, 5)), ((3, 3), (6, 6))])
def test_bicubic_errors(shape, size):
    with pytest.raises(CurvkitException):
        resample_bicubic(np.ones(shape), *size)

def test_map_resample_types(camera):
    depth = DepthMap(np.full(camera.shape, 2.0))
    small = depth.resample(40, 30)
    assert isinstance(small, DepthMap)
    assert np.allclose(small.data[small.mask], 2.0)

    normals = NormalMap(np.tile([0.0, 0.6, -0.8], (120, 160, 1))).resample(40, 30)
    assert np.allclose(normals.data, [0.0, 0.6, -0.8])
