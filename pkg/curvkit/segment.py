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

""" Border function b = wI |grad I| + wd |grad D| + wc C, thresholded """

import numpy as np

from .util import CurvkitException

REDUCTIONS = {
    'mean_abs': lambda k1, k2: 0.5 * (np.abs(k1) + np.abs(k2)),
    'max_abs': lambda k1, k2: np.maximum(np.abs(k1), np.abs(k2)),
    'abs_mean': lambda k1, k2: np.abs(0.5 * (k1 + k2)),
    }

SOURCES = ('groundtruth', 'predicted')


class BorderWeights(object):
    def __init__(self, w_I=1.0, w_d=5.0, w_c=0.1, delta_thresh=0.3):
        self.w_I = float(w_I)
        self.w_d = float(w_d)
        self.w_c = float(w_c)
        self.delta_thresh = float(delta_thresh)

        if min(self.w_I, self.w_d, self.w_c) < 0:
            raise CurvkitException('Border weights must be non-negative')

        if max(self.w_I, self.w_d, self.w_c) <= 0:
            raise CurvkitException('At least one border weight must be positive')

    def scaled(self, s):
        return BorderWeights(self.w_I * s, self.w_d * s, self.w_c * s, self.delta_thresh * s)


class BorderMap(object):
    def __init__(self, data):
        data = np.asarray(data)

        if not np.isin(data, (0, 1)).all():
            raise CurvkitException('Border map values must be 0 or 1')

        self.data = data.astype(np.uint8)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


def gradient_magnitude(field, mask=None):
    """ central differences, replicate boundary

    With a mask, pixels whose stencil touches an invalid sample get 0. """

    padded = np.pad(np.asarray(field, dtype=np.float64), 1, mode='edge')

    gx = 0.5 * (padded[1:-1, 2:] - padded[1:-1, :-2])
    gy = 0.5 * (padded[2:, 1:-1] - padded[:-2, 1:-1])
    mag = np.sqrt(gx * gx + gy * gy)

    if mask is None:
        return mag

    m = np.pad(np.asarray(mask, dtype=bool), 1, mode='edge')
    stencil = m[1:-1, 1:-1] & m[1:-1, 2:] & m[1:-1, :-2] & m[2:, 1:-1] & m[:-2, 1:-1]

    return np.where(stencil, mag, 0.0)


def border_function(rgb, depth, curv, w, reduction='mean_abs'):
    shapes = set([(rgb.height, rgb.width), (depth.height, depth.width), (curv.height, curv.width)])

    if len(shapes) != 1:
        raise CurvkitException('Border function inputs differ in resolution: %s' % sorted(shapes))

    if reduction not in REDUCTIONS:
        raise CurvkitException('Unknown curvature reduction "%s"' % reduction)

    color = gradient_magnitude(rgb.luminance())
    geometry = gradient_magnitude(depth.data, depth.mask)
    bend = np.where(curv.mask, REDUCTIONS[reduction](curv.k1, curv.k2), 0.0)

    return w.w_I * color + w.w_d * geometry + w.w_c * bend


def threshold(b, delta_thresh):
    return BorderMap(np.asarray(b) >= delta_thresh)


def segment_scene(rgb, depth_source, curv_source, w, groundtruth=None, predicted=None, reduction='mean_abs'):
    """ groundtruth / predicted are (DepthMap, CurvatureMap) pairs

    Maps not at the RGB resolution (network outputs) are resampled to it. """

    sources = {'groundtruth': groundtruth, 'predicted': predicted}

    for source in (depth_source, curv_source):
        if source not in SOURCES:
            raise CurvkitException('Unknown source "%s"' % source)

        if sources[source] is None:
            raise CurvkitException('No %s maps given' % source)

    depth = sources[depth_source][0]
    curv = sources[curv_source][1]

    if (depth.height, depth.width) != (rgb.height, rgb.width):
        depth = depth.resample(rgb.width, rgb.height)

    if (curv.height, curv.width) != (rgb.height, rgb.width):
        curv = curv.resample(rgb.width, rgb.height)

    return threshold(border_function(rgb, depth, curv, w, reduction), w.delta_thresh)
