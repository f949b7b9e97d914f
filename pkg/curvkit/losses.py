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

""" Training losses for depth, normals and curvature, with their gradients.

Every loss takes plain arrays (H, W) or (H, W, C) plus a boolean mask and
returns a LossResult whose grad has the prediction's shape and is zero on
masked pixels. Sums run in float64, row-major.
"""

import numpy as np

from .util import CurvkitException


class LossResult(object):
    def __init__(self, value, grad):
        self.value = float(value)
        self.grad = grad

    def __repr__(self):
        return 'LossResult(value=%r)' % self.value


def _check(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)

    if pred.shape != gt.shape or pred.shape[:2] != mask.shape:
        raise CurvkitException('Shape mismatch: pred %s, gt %s, mask %s' % (pred.shape, gt.shape, mask.shape))

    return pred, gt, mask


def depth_loss(pred_log_depth, gt_log_depth, mask):
    """ sum d^2 - (sum d)^2 / 2n^2 + (1/n) sum (dx^2 + dy^2), d = pred - gt

    dx, dy are forward differences; a pair with one masked member is 0. """

    pred, gt, mask = _check(pred_log_depth, gt_log_depth, mask)
    n = int(mask.sum())

    if n < 2:
        raise CurvkitException('Depth loss needs at least 2 valid pixels, got %s' % n)

    d = np.where(mask, pred - gt, 0.0)
    total = d.sum()

    pair_x = mask[:, 1:] & mask[:, :-1]
    pair_y = mask[1:, :] & mask[:-1, :]
    dx = np.where(pair_x, d[:, 1:] - d[:, :-1], 0.0)
    dy = np.where(pair_y, d[1:, :] - d[:-1, :], 0.0)

    value = (d * d).sum() - total * total / (2.0 * n * n) + ((dx * dx).sum() + (dy * dy).sum()) / n

    grad = 2 * d - total / float(n * n)
    grad[:, 1:] += 2 * dx / n
    grad[:, :-1] -= 2 * dx / n
    grad[1:, :] += 2 * dy / n
    grad[:-1, :] -= 2 * dy / n

    return LossResult(value, np.where(mask, grad, 0.0))


def normal_loss(pred_normals, gt_normals, mask, eps=1e-12):
    """ per pixel -N.N* + sum_i (n_i - n*_i)^2, summed over valid pixels

    N is the normalised prediction (angle term), the squared term uses the
    raw channels. A zero-length prediction only gets the squared term's
    gradient. """

    pred, gt, mask = _check(pred_normals, gt_normals, mask)

    norm = np.linalg.norm(pred, axis=-1)
    usable = norm > eps
    safe = np.where(usable, norm, 1.0)
    unit = pred / safe[..., None]

    dot = np.where(usable, np.einsum('ijk,ijk->ij', unit, gt), 0.0)
    diff = pred - gt

    per_pixel = -dot + (diff * diff).sum(axis=-1)
    value = np.where(mask, per_pixel, 0.0).sum()

    # d(-u.g)/dp = -(g - (u.g) u) / |p|
    grad_dot = -(gt - dot[..., None] * unit) / safe[..., None]
    grad_dot = np.where(usable[..., None], grad_dot, 0.0)

    grad = grad_dot + 2 * diff

    return LossResult(value, np.where(mask[..., None], grad, 0.0))


def curvature_loss(pred_k, gt_k, depth, mask, exponent=-2.0):
    """ sum w_i ((k1 - k1*)^2 + (k2 - k2*)^2), w_i = (1 + D_i)^exponent

    pred_k and gt_k are (H, W, 2) channel stacks, depth is in meters. The
    default exponent -2 damps far (noisy) pixels; +2 is the printed form. """

    pred, gt, mask = _check(pred_k, gt_k, mask)
    depth = np.asarray(depth, dtype=np.float64)

    if depth.shape != mask.shape:
        raise CurvkitException('Depth shape %s does not match mask %s' % (depth.shape, mask.shape))

    if np.any(depth[mask] < 0) or not np.isfinite(depth[mask]).all():
        raise CurvkitException('Curvature loss needs valid depth on masked-in pixels')

    weight = np.where(mask, (1.0 + np.where(mask, depth, 0.0)) ** exponent, 0.0)
    diff = pred - gt

    value = (weight * (diff * diff).sum(axis=-1)).sum()
    grad = 2 * weight[..., None] * diff

    return LossResult(value, grad)


LOSSES = {
    'depth': depth_loss,
    'normals': normal_loss,
    'curvature': curvature_loss,
    }
