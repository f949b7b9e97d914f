import json
import os

import numpy as np
import pytest

from curvkit import formats
from curvkit.cli import *

TINY_INI = """
[patch]
radius = 3
min_samples = 8

[dataset]
render_width = 32
render_height = 32
render_fx = 40
render_fy = 40
input_res = 16x16
target_res = 8x8

[network]
trunk_channels = 2,3,3
coarse_channels = 3
fine_channels = 3

[training]
epochs = 2
batch_size = 2
augment = false
"""


@pytest.fixture
def config(tmp_path):
    path = tmp_path / 'tiny.ini'
    path.write_text(TINY_INI)
    return str(path)

def run(*args):
    return cli_dispatch([str(x) for x in args])


def test_usage_errors(capsys):
    assert run() == 2
    assert run('fly') == 2
    assert run('synth', '--out', 'x') == 2

def test_version(capsys):
    assert run('--version') == 0
    out = capsys.readouterr().out
    assert 'manifest 1' in out
    assert 'model 1' in out

def test_eval_identical_depth(tmp_path):
    depth = np.linspace(1.0, 2.0, 12).reshape(3, 4)
    formats.write_pfm(depth, str(tmp_path / 'd.pfm'))

    assert run('eval', '--task', 'depth', '--pred', tmp_path / 'd.pfm', '--gt', tmp_path / 'd.pfm', '--json', tmp_path / 'r.json') == 0

    report = json.loads((tmp_path / 'r.json').read_text())
    assert report['rel_abs'] == 0.0
    assert report['delta1'] == 1.0

def test_missing_file(tmp_path, capsys):
    assert run('eval', '--task', 'depth', '--pred', tmp_path / 'no.pfm', '--gt', tmp_path / 'no.pfm') == 1
    assert 'ERROR' in capsys.readouterr().err

def test_missing_config(tmp_path):
    assert run('render-curvature', '--config', tmp_path / 'none.ini', '--curv', 'x.pfm', '--out', 'x.png') == 1

def test_eval_needs_inputs():
    assert run('eval', '--task', 'depth') == 1

def test_pipeline(tmp_path, config):
    data = tmp_path / 'data'
    assert run('synth', '--config', config, '--scenes', 4, '--seed', 2, '--out', data) == 0

    manifest = formats.read_manifest(str(data / 'manifest.jsonl'))
    assert len(manifest) == 4
    first = manifest.entries[0]

    intr = formats.CameraIntrinsics(**first.intrinsics)
    formats.write_intrinsics(intr, str(tmp_path / 'camera.txt'))

    depth = data / first.paths['depth']
    assert run('geometry', '--config', config, '--depth', depth, '--intrinsics', tmp_path / 'camera.txt',
        '--out-normals', tmp_path / 'n.pfm', '--out-curv', tmp_path / 'k.pfm', '--out-mask', tmp_path / 'm.png') == 0
    assert formats.load_curvature(str(tmp_path / 'k.pfm')).k1.shape == (8, 8)

    model = tmp_path / 'model.bin'
    assert run('train', '--config', config, '--data', data, '--out', model, '--report', tmp_path / 'train.json') == 0

    report = json.loads((tmp_path / 'train.json').read_text())
    assert len(report['history']) == 2
    assert report['holdout'] == 1

    assert run('eval', '--config', config, '--model', model, '--data', data, '--json', tmp_path / 'eval.json') == 0
    assert 'depth' in json.loads((tmp_path / 'eval.json').read_text())

    curv = data / first.paths['curvature']
    rgb = data / first.paths['rgb']
    assert run('segment', '--config', config, '--rgb', rgb, '--depth', depth, '--curv', curv,
        '--curv-scale', 0.1, '--out', tmp_path / 'border.png') == 0
    assert formats.read_rgb(str(tmp_path / 'border.png')).data.shape == (16, 16, 3)

    assert run('render-curvature', '--config', config, '--curv', curv, '--scale', 0.1, '--out', tmp_path / 'curv.png') == 0
    assert os.path.isfile(str(tmp_path / 'curv.png'))

def test_segment_missing_source(tmp_path, config):
    data = tmp_path / 'data'
    run('synth', '--config', config, '--scenes', 1, '--out', data)
    first = formats.read_manifest(str(data / 'manifest.jsonl')).entries[0]

    assert run('segment', '--config', config, '--rgb', data / first.paths['rgb'], '--depth', data / first.paths['depth'],
        '--depth-source', 'predicted', '--out', tmp_path / 'b.png') == 1

def test_deterministic(tmp_path, config):
    for name in ('a', 'b'):
        assert run('synth', '--config', config, '--scenes', 3, '--seed', 5, '--out', tmp_path / name) == 0
        assert run('train', '--config', config, '--data', tmp_path / name, '--out', tmp_path / name / 'model.bin') == 0

    for entry in os.listdir(str(tmp_path / 'a')):
        assert (tmp_path / 'a' / entry).read_bytes() == (tmp_path / 'b' / entry).read_bytes(), entry
