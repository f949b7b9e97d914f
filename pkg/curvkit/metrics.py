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

import numpy as np

from .geom import CLAMP, NormalMap
from .quadric import dense_geometry
from .util import CurvkitException

DELTA = 1.25
ANGLES = (11.25, 22.5, 30.0) # degrees
SIGMAS = (0.25, 0.5, 1.0) # m^-1
PLANAR_RADIUS = 1.0 # m

# all comparisons against thresholds are strict


class Metrics(object):
    fields = ()

    def __init__(self, **kwargs):
        for key in self.fields:
            setattr(self, key, kwargs[key])

    def as_dict(self):
        return dict((key, getattr(self, key)) for key in self.fields)

    def __repr__(self):
        return '%s(%s)' % (type(self).__name__, ', '.join('%s=%r' % x for x in self.as_dict().items()))


class DepthMetrics(Metrics):
    fields = ('rel_abs', 'rms_lin', 'rms_log', 'delta1', 'delta2', 'delta3')


class NormalMetrics(Metrics):
    fields = ('mean_deg', 'median_deg', 'within_11_25', 'within_22_5', 'within_30')


class CurvatureMetrics(Metrics):
    fields = ('rms_k1', 'rms_k2', 'median_planar', 'median_nonplanar', 'within_s1', 'within_s2', 'within_s3')


def _valid(*masks):
    valid = np.logical_and.reduce([np.asarray(m, dtype=bool) for m in masks if m is not None])

    if not valid.any():
        raise CurvkitException('Empty evaluation mask')

    return valid


def eval_depth(pred, gt, mask=None, delta=DELTA):
    " both linear depth in meters "

    valid = _valid(pred.mask, gt.mask, mask)
    p = pred.data[valid]
    g = gt.data[valid]

    ratio = np.maximum(p / g, g / p)

    return DepthMetrics(
        rel_abs=float(np.mean(np.abs(p - g) / g)),
        rms_lin=float(np.sqrt(np.mean((p - g) ** 2))),
        rms_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < delta)),
        delta2=float(np.mean(ratio < delta ** 2)),
        delta3=float(np.mean(ratio < delta ** 3)),
        )


def angular_error(pred, gt):
    " degrees between two (..., 3) unit-vector grids "
    dot = np.clip(np.einsum('...k,...k->...', pred, gt), -1.0, 1.0)
    return np.degrees(np.arccos(dot))


def eval_normals(pred, gt, mask=None, angles=ANGLES):
    " pred is normalised here, raw (H, W, 3) arrays are accepted too "

    if not isinstance(pred, NormalMap):
        pred = NormalMap.normalized(pred)

    valid = _valid(pred.mask, gt.mask, mask)
    err = angular_error(pred.data[valid], gt.data[valid])

    t1, t2, t3 = angles

    return NormalMetrics(
        mean_deg=float(np.mean(err)),
        median_deg=float(np.median(err)),
        within_11_25=float(np.mean(err < t1)),
        within_22_5=float(np.mean(err < t2)),
        within_30=float(np.mean(err < t3)),
        )


def eval_curvature(pred, gt, gt_depthmask=None, per_channel=False, sigmas=SIGMAS, planar_radius=PLANAR_RADIUS):
    """ Both maps unscaled (m^-1)

    Medians are over the mean-curvature error, split by the ground truth
    mean curvature: planar when |H*| < 1 / planar_radius. An empty split
    reports None. per_channel=True counts the sigma thresholds on the
    pooled k1 and k2 errors instead of the mean-curvature error. """

    valid = _valid(pred.mask, gt.mask, gt_depthmask)

    e1 = pred.k1[valid] - gt.k1[valid]
    e2 = pred.k2[valid] - gt.k2[valid]

    mean_gt = 0.5 * (gt.k1[valid] + gt.k2[valid])
    err = np.abs(0.5 * (pred.k1[valid] + pred.k2[valid]) - mean_gt)

    planar = np.abs(mean_gt) < 1.0 / planar_radius

    def median(x):
        return float(np.median(x)) if len(x) else None

    pooled = np.concatenate([np.abs(e1), np.abs(e2)]) if per_channel else err
    s1, s2, s3 = sigmas

    return CurvatureMetrics(
        rms_k1=float(np.sqrt(np.mean(e1 ** 2))),
        rms_k2=float(np.sqrt(np.mean(e2 ** 2))),
        median_planar=median(err[planar]),
        median_nonplanar=median(err[~planar]),
        within_s1=float(np.mean(pooled < s1)),
        within_s2=float(np.mean(pooled < s2)),
        within_s3=float(np.mean(pooled < s3)),
        )


def curvature_from_predicted_depth(pred_depth, intr, spec, clamp=CLAMP):
    " curvature computed from a depth prediction, the depth-derived baseline "
    return dense_geometry(pred_depth, intr, spec, clamp=clamp)[1]


def upsample_prediction(prediction, factor):
    " bicubic upsampling of a predicted map to ground-truth resolution "

    if factor == 1:
        return prediction

    return prediction.resample(int(round(prediction.width * factor)), int(round(prediction.height * factor)))
