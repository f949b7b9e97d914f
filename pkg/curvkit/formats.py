# This file is part of curvkit
#
# Copyright (C) 2026 curvkit contributors
#
# This program is free software: you can redistribute it and/or modify it under
# the terms of the GNU Affero General Public License as published by the Free
# Software Foundation, either version 3 of the License, or (at your option) any
# later version.
#
# This program is distributed in the hope that it will be useful, but WITHOUT
# ANY WARRANTY; without even the implied warranty of MERCHANTABILITY or FITNESS
# FOR A PARTICULAR PURPOSE. See the GNU Affero General Public License for more
# details.
#
# You should have received a copy of the GNU Affero General Public License along
# with this program. If not, see <https://www.gnu.org/licenses/>.

import json
import os.path
import re
from configparser import Error as ConfigError
from configparser import RawConfigParser
from io import BytesIO

import numpy as np
from PIL import Image

from .geom import CameraIntrinsics, CurvatureMap, DepthMap, NormalMap, RgbImage
from .synth import Sample
from .util import CurvkitException, FormatError, atomic_write

MANIFEST_VERSION = 1


# PFM

def write_pfm(data, path, mask=None):
    """ 'Pf' for HxW, 'PF' for HxWx3, little-endian, rows bottom to top

    Invalid pixels (mask False) are written as NaN. """

    arr = np.asarray(data, dtype=np.float32)

    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        arr = np.where(mask if arr.ndim == 2 else mask[..., None], arr, np.float32(np.nan)).astype(np.float32)

    if arr.ndim == 2:
        kind = b'Pf'

    elif arr.ndim == 3 and arr.shape[2] == 3:
        kind = b'PF'

    else:
        raise CurvkitException('PFM holds 1 or 3 channels, got shape %s' % (arr.shape,))

    height, width = arr.shape[:2]
    header = b'%s\n%d %d\n-1.0\n' % (kind, width, height)

    atomic_write(path, header + np.flipud(arr).astype('<f4').tobytes())


def read_pfm(path):
    " -> float32 array, HxW or HxWx3, NaN where the file marks invalid pixels "

    with open(path, 'rb') as f:
        raw = f.read()

    parts = raw.split(b'\n', 3)

    if len(parts) < 4:
        raise FormatError('%s: truncated PFM header' % path)

    kind, dims, scale, payload = parts

    if kind.strip() == b'PF':
        channels = 3

    elif kind.strip() == b'Pf':
        channels = 1

    else:
        raise FormatError('%s: unknown PFM identifier %r' % (path, kind[:8]))

    match = re.match(br'^\s*(\d+)\s+(\d+)\s*$', dims)

    if not match:
        raise FormatError('%s: bad PFM dimensions line %r' % (path, dims[:32]))

    width, height = int(match.group(1)), int(match.group(2))

    try:
        scale = float(scale.strip())

    except ValueError:
        raise FormatError('%s: bad PFM scale line %r' % (path, scale[:32]))

    if scale == 0:
        raise FormatError('%s: PFM scale must be non-zero' % path)

    dtype = '<f4' if scale < 0 else '>f4'
    need = width * height * channels * 4

    if len(payload) < need:
        raise FormatError('%s: truncated PFM payload (%s of %s bytes)' % (path, len(payload), need))

    arr = np.frombuffer(payload[:need], dtype=dtype)
    arr = arr.reshape((height, width, 3) if channels == 3 else (height, width))

    return np.flipud(arr).astype(np.float32)


def save_map(m, path):
    " DepthMap -> Pf, NormalMap -> PF, CurvatureMap -> PF (k1, k2, 0) "

    if isinstance(m, DepthMap):
        write_pfm(m.data, path, m.mask)

    elif isinstance(m, NormalMap):
        write_pfm(m.data, path, m.mask)

    elif isinstance(m, CurvatureMap):
        write_pfm(np.stack([m.k1, m.k2, np.zeros_like(m.k1)], axis=-1), path, m.mask)

    else:
        raise CurvkitException('Cannot save %s as PFM' % type(m).__name__)


def _valid(arr):
    return np.isfinite(arr).all(axis=-1) if arr.ndim == 3 else np.isfinite(arr)


def load_depth(path):
    arr = read_pfm(path)

    if arr.ndim != 2:
        raise FormatError('%s: depth needs a single channel PFM' % path)

    return DepthMap(np.nan_to_num(arr), _valid(arr))


def load_normals(path):
    arr = read_pfm(path)

    if arr.ndim != 3:
        raise FormatError('%s: normals need a 3 channel PFM' % path)

    return NormalMap.normalized(np.nan_to_num(arr), _valid(arr))


def load_curvature(path):
    arr = read_pfm(path)

    if arr.ndim != 3:
        raise FormatError('%s: curvature needs a 3 channel PFM' % path)

    return CurvatureMap.from_pair(np.nan_to_num(arr[..., 0]), np.nan_to_num(arr[..., 1]), _valid(arr))


# PNG / PPM

def write_png(data, path):
    " float data in [0, 1] or uint8, HxW or HxWx3 "

    arr = np.asarray(data)

    if arr.dtype != np.uint8:
        arr = np.rint(np.clip(arr, 0.0, 1.0) * 255).astype(np.uint8)

    out = BytesIO()
    Image.fromarray(arr).save(out, format='PNG')
    atomic_write(path, out.getvalue())


def read_rgb(path):
    " PNG or binary PPM -> RgbImage "

    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert('RGB'), dtype=np.float64) / 255.0

    except (IOError, OSError) as e:
        raise FormatError('%s: cannot read image (%s)' % (path, e))

    return RgbImage(arr)


def write_mask(mask, path):
    write_png(np.asarray(mask, dtype=np.uint8) * 255, path)


# intrinsics

def parse_intrinsics(text, defaults=None):
    " fx=... key-value lines (no section header) -> CameraIntrinsics "

    config = RawConfigParser()

    try:
        config.read_string('[camera]\n' + text)

    except ConfigError as e:
        raise FormatError('Bad intrinsics file: %s' % e)

    values = dict(defaults or {})
    values.update(config.items('camera'))

    try:
        return CameraIntrinsics(*[float(values[k]) for k in ('fx', 'fy', 'cx', 'cy')],
            width=int(float(values['width'])), height=int(float(values['height'])))

    except KeyError as e:
        raise FormatError('Intrinsics miss the %s entry' % e)

    except ValueError as e:
        raise FormatError('Bad intrinsics value: %s' % e)


def read_intrinsics(path, defaults=None):
    if not os.path.isfile(path):
        raise FormatError('Intrinsics file not found: %s' % path)

    with open(path) as f:
        return parse_intrinsics(f.read(), defaults)


def write_intrinsics(intr, path):
    text = ''.join('%s=%r\n' % x for x in intr.as_dict().items())
    atomic_write(path, text.encode('utf-8'))


# manifest (JSON lines, first line is the version tag)

class ManifestEntry(object):
    def __init__(self, sample_id, paths, curvature_scale, augment=None, seed=None, intrinsics=None):
        self.sample_id = sample_id
        self.paths = dict(paths)
        self.curvature_scale = float(curvature_scale)
        self.augment = augment
        self.seed = seed
        self.intrinsics = intrinsics

    def as_dict(self):
        return {'id': self.sample_id, 'paths': self.paths, 'curvature_scale': self.curvature_scale,
            'augment': self.augment, 'seed': self.seed, 'intrinsics': self.intrinsics}

    @classmethod
    def from_dict(cls, d):
        return cls(d['id'], d['paths'], d['curvature_scale'], d.get('augment'), d.get('seed'), d.get('intrinsics'))

    def __eq__(self, other):
        return isinstance(other, ManifestEntry) and self.as_dict() == other.as_dict()


class Manifest(object):
    def __init__(self, entries=None, version=MANIFEST_VERSION):
        self.entries = list(entries or [])
        self.version = version

    def __eq__(self, other):
        return isinstance(other, Manifest) and self.version == other.version and self.entries == other.entries

    def __len__(self):
        return len(self.entries)


def write_manifest(manifest, path):
    lines = [json.dumps({'manifest_version': manifest.version}, sort_keys=True)]
    lines += [json.dumps(x.as_dict(), sort_keys=True) for x in manifest.entries]
    atomic_write(path, ('\n'.join(lines) + '\n').encode('utf-8'))


def read_manifest(path, check_files=True):
    base = os.path.dirname(os.path.abspath(path))

    try:
        with open(path) as f:
            lines = [json.loads(x) for x in f if x.strip()]

    except ValueError as e:
        raise FormatError('%s: bad manifest line (%s)' % (path, e))

    if not lines or 'manifest_version' not in lines[0]:
        raise FormatError('%s: missing manifest version tag' % path)

    if lines[0]['manifest_version'] != MANIFEST_VERSION:
        raise FormatError('%s: unsupported manifest version %s' % (path, lines[0]['manifest_version']))

    try:
        entries = [ManifestEntry.from_dict(x) for x in lines[1:]]

    except KeyError as e:
        raise FormatError('%s: manifest entry misses %s' % (path, e))

    if check_files:
        for entry in entries:
            if 'curvature' in entry.paths and not entry.curvature_scale:
                raise FormatError('%s: no curvature scale for %s' % (path, entry.sample_id))

            for channel, rel in entry.paths.items():
                if not os.path.isfile(os.path.join(base, rel)):
                    raise FormatError('%s: %s file of %s not found (%s)' % (path, channel, entry.sample_id, rel))

    return Manifest(entries, lines[0]['manifest_version'])


def save_sample(sample, directory):
    " writes the four channels of a Sample, returns its ManifestEntry "

    name = sample.sample_id
    paths = {
        'rgb': name + '-rgb.png',
        'depth': name + '-depth.pfm',
        'normals': name + '-normals.pfm',
        'curvature': name + '-curvature.pfm',
        }

    write_png(sample.rgb.data, os.path.join(directory, paths['rgb']))
    save_map(sample.depth, os.path.join(directory, paths['depth']))
    save_map(sample.normals, os.path.join(directory, paths['normals']))
    save_map(sample.curvature, os.path.join(directory, paths['curvature']))

    intr = sample.intrinsics.as_dict() if sample.intrinsics is not None else None

    return ManifestEntry(name, paths, sample.curvature_scale, sample.augment, sample.seed, intr)


def load_sample(entry, directory):
    def path(channel):
        return os.path.join(directory, entry.paths[channel])

    intr = CameraIntrinsics(**entry.intrinsics) if entry.intrinsics else None

    return Sample(read_rgb(path('rgb')), load_depth(path('depth')), load_normals(path('normals')),
        load_curvature(path('curvature')), entry.curvature_scale, entry.seed, intr, entry.augment,
        entry.sample_id)


def load_dataset(directory, manifest='manifest.jsonl'):
    m = read_manifest(os.path.join(directory, manifest))
    return [load_sample(x, directory) for x in m.entries]
