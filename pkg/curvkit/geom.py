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

""" Dense map types, pinhole camera, back-projection and bicubic resampling.

Pixel (u, v) is column u, row v; pixel centers sit on integer coordinates.
All maps hold float64 data that is zeroed on invalid pixels, plus a boolean
validity mask. Arrays are frozen on construction.
"""

import numpy as np

from .util import CurvkitException

CLAMP = 100.0 # m^-1, principal curvature bound
UNIT_TOL = 1e-6


def _frozen(arr, dtype=np.float64):
    arr = np.array(arr, dtype=dtype)
    arr.setflags(write=False)
    return arr


class CameraIntrinsics(object):
    def __init__(self, fx, fy, cx, cy, width, height):
        self.fx = float(fx)
        self.fy = float(fy)
        self.cx = float(cx)
        self.cy = float(cy)
        self.width = int(width)
        self.height = int(height)

        if not (self.fx > 0 and self.fy > 0):
            raise CurvkitException('Focal lengths must be positive (fx=%s, fy=%s)' % (fx, fy))

        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise CurvkitException('Principal point (%s, %s) outside the %sx%s image' % (cx, cy, width, height))

    def __eq__(self, other):
        return isinstance(other, CameraIntrinsics) and self.as_dict() == other.as_dict()

    def __repr__(self):
        return 'CameraIntrinsics(%s)' % ', '.join('%s=%r' % x for x in self.as_dict().items())

    def as_dict(self):
        return {'fx': self.fx, 'fy': self.fy, 'cx': self.cx, 'cy': self.cy,
            'width': self.width, 'height': self.height}

    @property
    def shape(self):
        return (self.height, self.width)

    def rays(self):
        " (H, W, 3) viewing rays scaled so that Z == 1, i.e. point = depth * ray "
        v, u = np.mgrid[0:self.height, 0:self.width].astype(np.float64)
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)

    def resized(self, width, height):
        # pixel-center mapping x' = (x + 0.5) * s - 0.5, same as resample_bicubic
        sx = float(width) / self.width
        sy = float(height) / self.height

        return CameraIntrinsics(self.fx * sx, self.fy * sy,
            (self.cx + 0.5) * sx - 0.5, (self.cy + 0.5) * sy - 0.5,
            width, height)


DEFAULT_INTRINSICS = CameraIntrinsics(580, 580, 320, 240, 640, 480)


class DepthMap(object):
    def __init__(self, data, mask=None):
        data = np.asarray(data, dtype=np.float64)

        if data.ndim != 2:
            raise CurvkitException('Depth map must be 2D, got shape %s' % (data.shape,))

        valid = np.isfinite(data) & (data > 0)

        if mask is not None:
            valid &= np.asarray(mask, dtype=bool)

        self.data = _frozen(np.where(valid, data, 0.0))
        self.mask = _frozen(valid, bool)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    def log(self):
        " natural log on valid pixels, 0 elsewhere "
        return np.where(self.mask, np.log(np.where(self.mask, self.data, 1.0)), 0.0)

    def resample(self, width, height):
        data, mask = resample_bicubic(self.data, width, height, self.mask)
        return DepthMap(data, mask)


class NormalMap(object):
    def __init__(self, data, mask=None):
        data = np.asarray(data, dtype=np.float64)

        if data.ndim != 3 or data.shape[2] != 3:
            raise CurvkitException('Normal map must be HxWx3, got shape %s' % (data.shape,))

        valid = np.isfinite(data).all(axis=2)

        if mask is not None:
            valid &= np.asarray(mask, dtype=bool)

        clean = np.where(valid[..., None], data, 0.0)
        norms = np.linalg.norm(clean, axis=2)

        if np.any(np.abs(norms[valid] - 1.0) > UNIT_TOL):
            raise CurvkitException('Normal map holds non-unit vectors, use NormalMap.normalized()')

        self.data = _frozen(clean)
        self.mask = _frozen(valid, bool)

    @classmethod
    def normalized(cls, data, mask=None, eps=1e-12):
        " Scales every vector to unit length, zero-length vectors become invalid "
        data = np.asarray(data, dtype=np.float64)
        valid = np.isfinite(data).all(axis=2)

        if mask is not None:
            valid &= np.asarray(mask, dtype=bool)

        clean = np.where(valid[..., None], data, 0.0)
        norms = np.linalg.norm(clean, axis=2)
        valid &= norms > eps

        return cls(clean / np.where(valid, norms, 1.0)[..., None], valid)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    def oriented(self, intr):
        " Flips normals so that each one faces the camera "
        facing = np.einsum('ijk,ijk->ij', self.data, intr.rays())
        sign = np.where(facing > 0, -1.0, 1.0)
        return NormalMap(self.data * sign[..., None], self.mask)

    def resample(self, width, height):
        data, mask = resample_bicubic(self.data, width, height, self.mask)
        return NormalMap.normalized(data, mask)


class CurvatureMap(object):
    """ Principal curvature pair, k1 >= k2, clamped to +/- CLAMP

    Scaled training maps (x0.1) are CurvatureMap instances too, the scale
    travels alongside in the dataset metadata. """

    def __init__(self, k1, k2, mask=None):
        k1 = np.asarray(k1, dtype=np.float64)
        k2 = np.asarray(k2, dtype=np.float64)

        if k1.ndim != 2 or k1.shape != k2.shape:
            raise CurvkitException('Curvature channels must be two equal 2D grids')

        valid = np.isfinite(k1) & np.isfinite(k2)

        if mask is not None:
            valid &= np.asarray(mask, dtype=bool)

        k1 = np.where(valid, k1, 0.0)
        k2 = np.where(valid, k2, 0.0)

        if np.any(k1 < k2):
            raise CurvkitException('Curvature map is not sorted (k1 < k2), use CurvatureMap.from_pair()')

        if np.any(np.abs(k1) > CLAMP) or np.any(np.abs(k2) > CLAMP):
            raise CurvkitException('Curvature map exceeds the +/-%s bound' % CLAMP)

        self.k1 = _frozen(k1)
        self.k2 = _frozen(k2)
        self.mask = _frozen(valid, bool)

    @classmethod
    def from_pair(cls, a, b, mask=None, clamp=CLAMP):
        a, b = sort_and_clamp(a, b, clamp)
        return cls(a, b, mask)

    @property
    def height(self):
        return self.k1.shape[0]

    @property
    def width(self):
        return self.k1.shape[1]

    def stacked(self):
        return np.stack([self.k1, self.k2], axis=-1)

    def scaled(self, factor):
        return CurvatureMap.from_pair(self.k1 * factor, self.k2 * factor, self.mask)

    def mean_curvature(self):
        return 0.5 * (self.k1 + self.k2)

    def gaussian_curvature(self):
        return self.k1 * self.k2

    def resample(self, width, height, clamp=CLAMP):
        data, mask = resample_bicubic(self.stacked(), width, height, self.mask)
        return CurvatureMap.from_pair(data[..., 0], data[..., 1], mask, clamp)


class RgbImage(object):
    def __init__(self, data):
        data = np.asarray(data, dtype=np.float64)

        if data.ndim != 3 or data.shape[2] != 3:
            raise CurvkitException('RGB image must be HxWx3, got shape %s' % (data.shape,))

        if not np.isfinite(data).all() or data.min() < 0 or data.max() > 1:
            raise CurvkitException('RGB values must lie within [0, 1]')

        self.data = _frozen(data)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    def luminance(self):
        return self.data @ np.array([0.2126, 0.7152, 0.0722])

    def resample(self, width, height):
        data, _ = resample_bicubic(self.data, width, height)
        return RgbImage(np.clip(data, 0.0, 1.0))


class PointCloudGrid(object):
    def __init__(self, points, mask):
        self.points = _frozen(points)
        self.mask = _frozen(mask, bool)

    @property
    def height(self):
        return self.points.shape[0]

    @property
    def width(self):
        return self.points.shape[1]


def sort_and_clamp(a, b, clamp=CLAMP):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.clip(np.maximum(a, b), -clamp, clamp), np.clip(np.minimum(a, b), -clamp, clamp)


def backproject(depth, intr):
    if (depth.width, depth.height) != (intr.width, intr.height):
        raise CurvkitException('Depth map is %sx%s but intrinsics are %sx%s'
            % (depth.width, depth.height, intr.width, intr.height))

    points = intr.rays() * depth.data[..., None]
    return PointCloudGrid(np.where(depth.mask[..., None], points, 0.0), depth.mask)


def project(cloud, intr):
    " Perspective division, returns (u, v) with NaN on invalid pixels "
    p = cloud.points
    z = np.where(cloud.mask, p[..., 2], np.nan)

    u = intr.fx * p[..., 0] / z + intr.cx
    v = intr.fy * p[..., 1] / z + intr.cy

    return u, v


def _catmull_rom(t):
    # Keys cubic kernel with a = -0.5, weights of taps at -1, 0, +1, +2
    t2 = t * t
    t3 = t2 * t

    return np.stack([
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
        ], axis=1)


PAD = 2


def _axis_taps(n_src, n_dst):
    s = (np.arange(n_dst) + 0.5) * n_src / n_dst - 0.5
    i0 = np.floor(s).astype(np.int64)
    idx = i0[:, None] + np.arange(-1, 3)[None, :] + PAD

    return idx, _catmull_rom(s - i0)


def resample_bicubic(values, new_width, new_height, mask=None):
    """ Catmull-Rom resampling of an HxW or HxWxC grid

    Borders are extended by odd reflection, which keeps the kernel exact on
    affine data. An output pixel is invalid as soon as one sample of its 4x4
    support (or one sample an extrapolated tap depends on) is invalid.
    Returns (values, mask). """

    values = np.asarray(values, dtype=np.float64)
    height, width = values.shape[:2]

    if new_width < 1 or new_height < 1:
        raise CurvkitException('Degenerate target size %sx%s' % (new_width, new_height))

    if width < 4 or height < 4:
        raise CurvkitException('Bicubic resampling needs at least 4x4 samples, got %sx%s' % (width, height))

    if mask is None:
        mask = np.ones((height, width), dtype=bool)

    mask = np.asarray(mask, dtype=bool)
    extra = [(0, 0)] * (values.ndim - 2)

    clean = np.where(mask.reshape(mask.shape + (1,) * (values.ndim - 2)), values, 0.0)
    padded = np.pad(clean, [(PAD, PAD), (PAD, PAD)] + extra, mode='reflect', reflect_type='odd')
    padded_mask = np.pad(mask, PAD, mode='reflect') & np.pad(mask, PAD, mode='edge')

    ridx, rw = _axis_taps(height, new_height)
    cidx, cw = _axis_taps(width, new_width)

    rows = np.einsum('ik,ik...->i...', rw, padded[ridx])
    out = np.einsum('jk,ijk...->ij...', cw, rows[:, cidx])

    out_mask = padded_mask[ridx].all(axis=1)[:, cidx].all(axis=2)
    out = np.where(out_mask.reshape(out_mask.shape + (1,) * (values.ndim - 2)), out, 0.0)

    return out, out_mask
