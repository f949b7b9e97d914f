import json

import numpy as np
import pytest

from curvkit.formats import *
from curvkit.geom import CameraIntrinsics, CurvatureMap, DepthMap, NormalMap
from curvkit.util import FormatError


def test_pfm_round_trip_bits(tmp_path, rng):
    data = rng.normal(0.0, 10.0, (7, 5)).astype(np.float32)
    data[2, 3] = np.nan
    data[0, 0] = -0.0

    write_pfm(data, str(tmp_path / 'x.pfm'))
    back = read_pfm(str(tmp_path / 'x.pfm'))

    assert back.dtype == np.float32
    assert np.array_equal(back.view(np.uint32), data.view(np.uint32))

def test_pfm_three_channels(tmp_path, rng):
    data = rng.random((4, 6, 3)).astype(np.float32)
    write_pfm(data, str(tmp_path / 'x.pfm'))

    assert np.array_equal(read_pfm(str(tmp_path / 'x.pfm')), data)
    assert (tmp_path / 'x.pfm').read_bytes().startswith(b'PF\n6 4\n-1.0\n')

def test_pfm_bottom_row_first(tmp_path):
    path = tmp_path / 'x.pfm'
    path.write_bytes(b'Pf\n2 2\n-1.0\n' + np.array([1, 2, 3, 4], dtype='<f4').tobytes())

    assert read_pfm(str(path)).tolist() == [[3.0, 4.0], [1.0, 2.0]]

def test_pfm_big_endian(tmp_path):
    path = tmp_path / 'x.pfm'
    path.write_bytes(b'Pf\n2 1\n1.0\n' + np.array([1.5, -2.0], dtype='>f4').tobytes())

    assert read_pfm(str(path)).tolist() == [[1.5, -2.0]]

@pytest.mark.parametrize('raw', [
    b'P6\n2 2\n-1.0\n' + b'\0' * 16,
    b'Pf\n2 x\n-1.0\n' + b'\0' * 16,
    b'Pf\n2 2\nscale\n' + b'\0' * 16,
    b'Pf\n2 2\n0.0\n' + b'\0' * 16,
    b'Pf\n2 2\n-1.0\n' + b'\0' * 15,
    b'Pf\n2 2',
    ])
def test_pfm_malformed(tmp_path, raw):
    path = tmp_path / 'bad.pfm'
    path.write_bytes(raw)

    with pytest.raises(FormatError):
        read_pfm(str(path))

def test_pfm_mask_writes_nan(tmp_path):
    depth = DepthMap([[1.0, 0.0], [2.0, 3.0]])
    save_map(depth, str(tmp_path / 'd.pfm'))

    raw = read_pfm(str(tmp_path / 'd.pfm'))
    assert np.isnan(raw[0, 1])

    back = load_depth(str(tmp_path / 'd.pfm'))
    assert back.mask.tolist() == depth.mask.tolist()
    assert np.array_equal(back.data, depth.data)

def test_map_channels(tmp_path):
    normals = NormalMap(np.tile([0.0, 0.6, -0.8], (3, 4, 1)))
    save_map(normals, str(tmp_path / 'n.pfm'))
    assert np.allclose(load_normals(str(tmp_path / 'n.pfm')).data, normals.data)

    curv = CurvatureMap([[4.0, 0.5]], [[-1.0, 0.25]])
    save_map(curv, str(tmp_path / 'k.pfm'))
    back = load_curvature(str(tmp_path / 'k.pfm'))
    assert np.allclose(back.k1, curv.k1)
    assert np.allclose(back.k2, curv.k2)
    assert read_pfm(str(tmp_path / 'k.pfm'))[..., 2].tolist() == [[0.0, 0.0]]

    with pytest.raises(FormatError):
        load_depth(str(tmp_path / 'k.pfm'))

def test_png(tmp_path, rng):
    data = rng.random((5, 6, 3))
    write_png(data, str(tmp_path / 'x.png'))

    back = read_rgb(str(tmp_path / 'x.png'))
    assert np.abs(back.data - data).max() <= 0.5 / 255 + 1e-12

def test_read_rgb_missing(tmp_path):
    with pytest.raises(FormatError):
        read_rgb(str(tmp_path / 'none.png'))

def test_intrinsics(tmp_path, camera):
    write_intrinsics(camera, str(tmp_path / 'cam.cfg'))
    assert read_intrinsics(str(tmp_path / 'cam.cfg')) == camera

    intr = parse_intrinsics('fx = 100\nfy=100\ncx=20\ncy=10\n', {'width': 40, 'height': 20})
    assert intr.shape == (20, 40)

    with pytest.raises(FormatError):
        parse_intrinsics('fx=100\nfy=100\ncx=20\n')

    with pytest.raises(FormatError):
        parse_intrinsics('fx=abc\nfy=100\ncx=20\ncy=10\nwidth=40\nheight=20\n')

    with pytest.raises(FormatError):
        read_intrinsics(str(tmp_path / 'none.cfg'))

def test_manifest_round_trip(tmp_path):
    (tmp_path / 'a.pfm').write_bytes(b'')
    entry = ManifestEntry('a', {'depth': 'a.pfm'}, 0.1, {'flip_h': True}, 7, {'fx': 1.0})
    write_manifest(Manifest([entry]), str(tmp_path / 'manifest.jsonl'))

    lines = (tmp_path / 'manifest.jsonl').read_text().splitlines()
    assert json.loads(lines[0]) == {'manifest_version': 1}
    assert read_manifest(str(tmp_path / 'manifest.jsonl')) == Manifest([entry])

def test_manifest_errors(tmp_path):
    path = tmp_path / 'manifest.jsonl'

    write_manifest(Manifest([ManifestEntry('a', {'depth': 'missing.pfm'}, 0.1)]), str(path))
    with pytest.raises(FormatError):
        read_manifest(str(path))
    assert len(read_manifest(str(path), check_files=False)) == 1

    path.write_text('{"manifest_version": 2}\n')
    with pytest.raises(FormatError):
        read_manifest(str(path))

    path.write_text('{"manifest_version": 1}\n{"id": "a"}\n')
    with pytest.raises(FormatError):
        read_manifest(str(path))

    path.write_text('not json\n')
    with pytest.raises(FormatError):
        read_manifest(str(path))

def test_sample_round_trip(tmp_path, tiny_dataset):
    sample = tiny_dataset[1]
    entry = save_sample(sample, str(tmp_path))
    back = load_sample(entry, str(tmp_path))

    assert back.sample_id == sample.sample_id
    assert back.seed == sample.seed
    assert back.intrinsics == sample.intrinsics
    assert back.curvature_scale == 0.1
    assert np.abs(back.rgb.data - sample.rgb.data).max() <= 0.5 / 255 + 1e-12
    assert np.allclose(back.depth.data, sample.depth.data, rtol=1e-6)
    assert np.array_equal(back.depth.mask, sample.depth.mask)
    assert np.allclose(back.curvature.k1, sample.curvature.k1, atol=1e-6)

def test_load_dataset(tmp_path, tiny_dataset):
    entries = [save_sample(x, str(tmp_path)) for x in tiny_dataset]
    write_manifest(Manifest(entries), str(tmp_path / 'manifest.jsonl'))

    loaded = load_dataset(str(tmp_path))
    assert [x.sample_id for x in loaded] == [x.sample_id for x in tiny_dataset]
