import numpy as np
import pytest
from scipy import ndimage

from curvkit import caching, quadric
from curvkit.caching import *
from curvkit.curvkit import GeometryFetch, Options
from curvkit.geom import CLAMP, CameraIntrinsics, DepthMap
from curvkit.synth import render


@pytest.fixture
def geometry(camera, patch, sphere_scene):
    _, depth, _, _ = render(sphere_scene, camera)
    normals, curv = quadric.dense_geometry(depth, camera, patch)
    return depth, normals, curv


def test_capped_dict(monkeypatch):
    monkeypatch.setattr(caching, 'CACHE_SIZE', 2)
    cache = CappedDict()

    cache['a'] = 1
    cache['b'] = 2
    cache['a'] = 3
    cache['c'] = 4
    cache.trim()

    assert 'a' in cache and 'c' in cache
    assert 'b' not in cache
    assert cache['a'] == 3

def test_sqlite():
    cache = SQLiteCache(':memory:', size=2)

    cache['a'] = b'1'
    cache['b'] = b'2'
    cache['a'] = b'3'
    cache['c'] = b'4'
    cache.trim()

    assert len(cache) == 2
    assert cache['a'] == b'3'
    assert 'b' not in cache

    with pytest.raises(KeyError):
        cache['x']

def test_diskcache(tmp_path):
    pytest.importorskip('diskcache')
    cache = DiskCacheHandler(str(tmp_path), size=1)

    cache['a'] = b'blob'
    cache['b'] = b'other'
    cache.trim()

    assert len(cache) == 1
    assert cache['b'] == b'other'
    assert 'a' not in cache

def test_geometry_key(camera, patch):
    depth = DepthMap(np.full(camera.shape, 2.0))
    key = geometry_key(depth, camera, patch, CLAMP)

    assert key == geometry_key(DepthMap(np.full(camera.shape, 2.0)), camera, patch, CLAMP)
    assert len(key) == 40

    assert key != geometry_key(DepthMap(np.full(camera.shape, 2.5)), camera, patch, CLAMP)
    assert key != geometry_key(depth, CameraIntrinsics(150, 145, 79.5, 59.5, 160, 120), patch, CLAMP)
    assert key != geometry_key(depth, camera, quadric.PatchSpec(radius_px=8), CLAMP)
    assert key != geometry_key(depth, camera, patch, 50.0)

def test_pack_geometry(geometry):
    _, normals, curv = geometry
    n, c = unpack_geometry(pack_geometry(normals, curv))

    assert np.array_equal(n.data, normals.data)
    assert np.array_equal(c.k1, curv.k1)
    assert np.array_equal(c.mask, curv.mask)

def test_geometry_fetch_hit(monkeypatch, camera, patch, geometry):
    depth, normals, curv = geometry
    cache = CappedDict()

    first = GeometryFetch(depth, camera, patch, cache=cache)
    assert len(cache) == 1
    assert np.array_equal(first[1].k1, curv.k1)

    def fail(*args, **kwargs):
        raise AssertionError('dense_geometry called on a cached input')

    monkeypatch.setattr(quadric, 'dense_geometry', fail)

    again = GeometryFetch(depth, camera, patch, cache=cache)
    assert np.array_equal(again[0].data, normals.data)

    with pytest.raises(AssertionError):
        GeometryFetch(depth, camera, patch, Options(force=True), cache=cache)

def test_geometry_fetch_options(camera, patch, geometry):
    depth = geometry[0]

    normals, curv = GeometryFetch(depth, camera, patch, Options(mask_boundary=True), cache=CappedDict())
    assert normals.mask.sum() < geometry[1].mask.sum()
    assert np.array_equal(normals.mask, curv.mask)

    normals, _ = GeometryFetch(depth, camera, patch, Options(downsample='80x60'), cache=CappedDict())
    assert normals.data.shape == (60, 80, 3)

def test_geometry_fetch_downsample_accuracy(sphere_scene):
    cam = CameraIntrinsics(290, 290, 159.5, 119.5, 320, 240)
    _, depth, _, _ = render(sphere_scene, cam)

    normals, curv = GeometryFetch(depth, cam, quadric.PatchSpec(), Options(downsample='80x60'), cache=CappedDict())
    assert curv.k1.shape == (60, 80)
    assert normals.data.shape == (60, 80, 3)

    _, small, _, _ = render(sphere_scene, cam.resized(80, 60))
    region = ndimage.binary_erosion(small.mask & (small.data < 2.0), iterations=2) & curv.mask
    assert region.sum() > 50

    assert np.median(np.abs(curv.k1[region] - 4.0)) < 0.2
    assert np.median(np.abs(curv.k2[region] - 4.0)) < 0.2

def test_geometry_fetch_clamp(camera, patch, geometry):
    depth = geometry[0]
    cache = CappedDict()

    _, curv = GeometryFetch(depth, camera, patch, cache=cache, clamp=2.0)
    assert curv.k1[curv.mask].max() <= 2.0
    assert len(cache) == 1

    _, curv = GeometryFetch(depth, camera, patch, cache=cache)
    assert curv.k1[curv.mask].max() > 2.0
    assert len(cache) == 2
