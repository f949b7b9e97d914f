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

""" Joint augmentation of RGB, depth, normals and curvature

Forward transform of image point p (centered coordinates, y down):
flip x, rotate by rotation_deg, translate by translation_px (RGB pixels,
rescaled for lower resolution channels). Depth and curvature are sampled
nearest-neighbour, RGB bilinearly; normal vectors get the same flip and
in-plane rotation. Depth values are never rescaled.
"""

import numpy as np
from scipy import ndimage

from .geom import CurvatureMap, DepthMap, NormalMap, RgbImage
from .synth import Sample
from .util import CurvkitException

ROTATION = 15.0 # degrees
TRANSLATION = 10 # pixels
COLOR = (0.8, 1.25)


class AugmentSpec(object):
    def __init__(self, flip_h=False, rotation_deg=0.0, translation_px=(0, 0), color_scale=(1.0, 1.0, 1.0), seed=None):
        self.flip_h = bool(flip_h)
        self.rotation_deg = float(rotation_deg)
        self.translation_px = tuple(float(x) for x in translation_px)
        self.color_scale = tuple(float(x) for x in color_scale)
        self.seed = seed

        if len(self.translation_px) != 2 or len(self.color_scale) != 3:
            raise CurvkitException('translation_px needs (dx, dy), color_scale needs 3 values')

        if min(self.color_scale) <= 0:
            raise CurvkitException('Colour multipliers must be positive')

    def __eq__(self, other):
        return isinstance(other, AugmentSpec) and self.as_dict() == other.as_dict()

    def __repr__(self):
        return 'AugmentSpec(%s)' % ', '.join('%s=%r' % x for x in self.as_dict().items())

    def as_dict(self):
        return {'flip_h': self.flip_h, 'rotation_deg': self.rotation_deg,
            'translation_px': list(self.translation_px), 'color_scale': list(self.color_scale),
            'seed': self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(d['flip_h'], d['rotation_deg'], d['translation_px'], d['color_scale'], d.get('seed'))

    def is_identity(self):
        return (not self.flip_h and self.rotation_deg == 0 and self.translation_px == (0.0, 0.0)
            and self.color_scale == (1.0, 1.0, 1.0))


def random_spec(rng_seed, rotation=ROTATION, translation=TRANSLATION, color=COLOR):
    rng = np.random.default_rng(rng_seed)

    return AugmentSpec(
        flip_h=bool(rng.integers(2)),
        rotation_deg=rng.uniform(-rotation, rotation),
        translation_px=rng.integers(-translation, translation + 1, 2),
        color_scale=rng.uniform(color[0], color[1], 3),
        seed=int(rng_seed),
        )


def _source_coords(height, width, spec, scale):
    " input (y, x) sampled by every output pixel "

    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0

    x = xx - cx - spec.translation_px[0] * scale
    y = yy - cy - spec.translation_px[1] * scale

    theta = np.radians(spec.rotation_deg)
    c, s = np.cos(theta), np.sin(theta)
    qx = c * x + s * y
    qy = -s * x + c * y

    if spec.flip_h:
        qx = -qx

    return qy + cy, qx + cx


def _nearest(values, mask, y, x):
    yi = np.rint(y).astype(np.int64)
    xi = np.rint(x).astype(np.int64)
    height, width = mask.shape

    inside = (yi >= 0) & (yi < height) & (xi >= 0) & (xi < width)
    yi = np.clip(yi, 0, height - 1)
    xi = np.clip(xi, 0, width - 1)

    return values[yi, xi], inside & mask[yi, xi]


def _rotate_vectors(data, spec):
    nx, ny, nz = data[..., 0], data[..., 1], data[..., 2]

    if spec.flip_h:
        nx = -nx

    theta = np.radians(spec.rotation_deg)
    c, s = np.cos(theta), np.sin(theta)

    return np.stack([c * nx - s * ny, s * nx + c * ny, nz], axis=-1)


def apply(sample, spec):
    " (rgb, depth, normals, curvature) tuple or Sample -> same kind, augmented "

    if isinstance(sample, Sample):
        rgb, depth, normals, curv = sample.rgb, sample.depth, sample.normals, sample.curvature

    else:
        rgb, depth, normals, curv = sample

    aspect = float(rgb.width) / rgb.height

    for m in (depth, normals, curv):
        if abs(float(m.width) / m.height - aspect) > 1e-9:
            raise CurvkitException('Inconsistent resolutions: %sx%s vs RGB %sx%s' % (m.width, m.height, rgb.width, rgb.height))

    # rgb: bilinear, black outside the frame
    y, x = _source_coords(rgb.height, rgb.width, spec, 1.0)
    channels = [ndimage.map_coordinates(rgb.data[..., i], [y, x], order=1, mode='constant', cval=0.0) for i in range(3)]
    out_rgb = np.stack(channels, axis=-1) * np.array(spec.color_scale)
    out_rgb = RgbImage(np.clip(out_rgb, 0.0, 1.0))

    y, x = _source_coords(depth.height, depth.width, spec, float(depth.width) / rgb.width)
    values, mask = _nearest(depth.data, depth.mask, y, x)
    out_depth = DepthMap(values, mask)

    y, x = _source_coords(normals.height, normals.width, spec, float(normals.width) / rgb.width)
    values, mask = _nearest(normals.data, normals.mask, y, x)
    out_normals = NormalMap(_rotate_vectors(values, spec), mask)

    # principal curvatures are view invariant scalars, only positions move
    y, x = _source_coords(curv.height, curv.width, spec, float(curv.width) / rgb.width)
    values, mask = _nearest(curv.stacked(), curv.mask, y, x)
    out_curv = CurvatureMap(values[..., 0], values[..., 1], mask)

    if isinstance(sample, Sample):
        return Sample(out_rgb, out_depth, out_normals, out_curv, sample.curvature_scale, sample.seed,
            sample.intrinsics, spec.as_dict(), sample.sample_id)

    return out_rgb, out_depth, out_normals, out_curv
