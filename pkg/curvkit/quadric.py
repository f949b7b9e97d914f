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

""" Normals and principal curvatures from parabolic quadrics fit over a
sparse circular pixel patch.

Each fit is two-pass: a covariance plane gives the local frame (t1, t2, n0)
with n0 facing the camera, then the height along n0 is fit by
w = a u^2 + b uv + c v^2 + d u + e v + f in that frame, u = v = 0 being the
center pixel's point.

Sign convention: positive curvature is convex toward the camera (a sphere
seen from outside has k1 = k2 = +1/R).
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import ndimage

from .geom import CLAMP, CurvatureMap, NormalMap, backproject
from .util import CurvkitException, log

THREADS = int(os.getenv('THREADS', 1)) # row blocks computed in parallel
BLOCK_ROWS = int(os.getenv('BLOCK_ROWS', 16))

RING_COUNTS = (8, 12, 16, 20)
RANK_TOL = 1e-12


def ring_offsets(radius_px, ring_counts=RING_COUNTS):
    " center + concentric rings at radius * k / len(rings), truncated toward zero "

    offsets = [(0, 0)]
    n = len(ring_counts)

    for k, count in enumerate(ring_counts, 1):
        rho = radius_px * float(k) / n
        angles = 2 * np.pi * np.arange(count) / count

        for du, dv in zip(np.trunc(rho * np.cos(angles)), np.trunc(rho * np.sin(angles))):
            offset = (int(du), int(dv))

            if offset not in offsets:
                offsets.append(offset)

    return offsets


class PatchSpec(object):
    def __init__(self, radius_px=18, sample_offsets=None, min_samples=12, ring_counts=RING_COUNTS):
        if radius_px <= 0:
            raise CurvkitException('Patch radius must be positive')

        if sample_offsets is None:
            sample_offsets = ring_offsets(radius_px, ring_counts)

        offsets = np.array(sample_offsets, dtype=np.int64).reshape(-1, 2)

        if np.any((offsets ** 2).sum(axis=1) > radius_px ** 2):
            raise CurvkitException('Sample offsets must lie within the %s px radius' % radius_px)

        if min_samples < 6:
            raise CurvkitException('A quadric has 6 coefficients, min_samples must be >= 6')

        if len(offsets) < min_samples:
            raise CurvkitException('Only %s offsets for min_samples=%s' % (len(offsets), min_samples))

        offsets.setflags(write=False)

        self.radius_px = radius_px
        self.sample_offsets = offsets
        self.min_samples = int(min_samples)

    def __repr__(self):
        return 'PatchSpec(radius_px=%r, samples=%s, min_samples=%s)' % (self.radius_px, len(self.sample_offsets), self.min_samples)

    def digest_parts(self):
        return (self.sample_offsets.tobytes(), str(self.min_samples).encode())


class LocalQuadric(object):
    " frame rows are (t1, t2, n0) in camera coordinates "

    def __init__(self, frame, coeffs, origin=None):
        self.frame = np.asarray(frame, dtype=np.float64)
        self.coeffs = np.asarray(coeffs, dtype=np.float64)
        self.origin = None if origin is None else np.asarray(origin, dtype=np.float64)

        if np.abs(self.frame @ self.frame.T - np.eye(3)).max() > 1e-9:
            raise CurvkitException('Quadric frame is not orthonormal')

    def height(self, u, v):
        a, b, c, d, e, f = self.coeffs
        return a * u * u + b * u * v + c * v * v + d * u + e * v + f


def _frames(samples, weights, centers):
    count = np.maximum(weights.sum(axis=1), 1.0)
    centroid = (samples * weights[..., None]).sum(axis=1) / count[:, None]

    spread = (samples - centroid[:, None]) * weights[..., None]
    cov = np.einsum('nmi,nmj->nij', spread, spread) / count[:, None, None]

    _, vecs = np.linalg.eigh(cov)
    n0 = vecs[:, :, 0]
    n0 = np.where((np.einsum('ni,ni->n', n0, centers) > 0)[:, None], -n0, n0)

    # t1 follows the camera x axis projected into the plane
    axis = np.where((np.abs(n0[:, 0]) > 0.9)[:, None], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0])
    t1 = axis - np.einsum('ni,ni->n', axis, n0)[:, None] * n0
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(n0, t1)

    return np.stack([t1, t2, n0], axis=1)


def _fit_batch(samples, valid, centers):
    """ samples (N, M, 3), valid (N, M), centers (N, 3)

    Returns frames (N, 3, 3), coeffs (N, 6), ok (N,). """

    weights = valid.astype(np.float64)
    frames = _frames(samples, weights, centers)

    local = np.einsum('nmi,nji->nmj', samples - centers[:, None], frames)
    u, v, w = local[..., 0], local[..., 1], local[..., 2]

    # unit rms radius keeps the design matrix well conditioned
    rho = np.sqrt((weights * (u * u + v * v)).sum(axis=1) / np.maximum(weights.sum(axis=1), 1.0))
    rho = np.where(rho > 0, rho, 1.0)[:, None]
    us, vs = u / rho, v / rho

    design = np.stack([us * us, us * vs, vs * vs, us, vs, np.ones_like(us)], axis=-1) * weights[..., None]
    rhs = w * weights

    U, S, Vt = np.linalg.svd(design, full_matrices=False)
    ok = S[:, -1] > RANK_TOL * S[:, 0]

    proj = np.einsum('nmk,nm->nk', U, rhs) / np.where(ok[:, None], S, 1.0)
    coeffs = np.einsum('nkj,nk->nj', Vt, proj)

    rho = rho[:, 0]
    coeffs = coeffs / np.stack([rho ** 2, rho ** 2, rho ** 2, rho, rho, np.ones_like(rho)], axis=1)

    return frames, np.where(ok[:, None], coeffs, 0.0), ok


def fit_points(samples, center, min_samples=6):
    " Fits a LocalQuadric to raw 3D samples around `center`, None if degenerate "

    samples = np.asarray(samples, dtype=np.float64).reshape(1, -1, 3)
    valid = np.isfinite(samples).all(axis=2)

    if valid.sum() < min_samples:
        return None

    samples = np.where(valid[..., None], samples, 0.0)
    center = np.asarray(center, dtype=np.float64)

    frames, coeffs, ok = _fit_batch(samples, valid, center[None])

    if not ok[0]:
        return None

    return LocalQuadric(frames[0], coeffs[0], center)


def _gather(cloud, rows, cols, offsets):
    " sample points of every (row, col) pixel, plus their validity "

    vv = rows[:, None] + offsets[None, :, 1]
    uu = cols[:, None] + offsets[None, :, 0]

    inside = (vv >= 0) & (vv < cloud.height) & (uu >= 0) & (uu < cloud.width)
    vv = np.clip(vv, 0, cloud.height - 1)
    uu = np.clip(uu, 0, cloud.width - 1)

    return cloud.points[vv, uu], inside & cloud.mask[vv, uu]


def fit_patch(points, center, spec):
    """ Quadric over the patch around pixel center=(u, v)

    Returns None (pixel invalid) when the center has no point, when fewer
    than spec.min_samples samples are valid or when the system is rank
    deficient. """

    u, v = center

    if not (0 <= v < points.height and 0 <= u < points.width) or not points.mask[v, u]:
        return None

    samples, valid = _gather(points, np.array([v]), np.array([u]), spec.sample_offsets)

    if valid.sum() < spec.min_samples:
        return None

    samples = np.where(valid[..., None], samples, 0.0)
    frames, coeffs, ok = _fit_batch(samples, valid, points.points[v, u][None])

    if not ok[0]:
        return None

    return LocalQuadric(frames[0], coeffs[0], points.points[v, u])


def _normals(frames, coeffs, centers):
    d, e = coeffs[:, 3], coeffs[:, 4]
    n = -d[:, None] * frames[:, 0] - e[:, None] * frames[:, 1] + frames[:, 2]
    n /= np.linalg.norm(n, axis=1)[:, None]

    return np.where((np.einsum('ni,ni->n', n, centers) > 0)[:, None], -n, n)


def principal_curvatures(coeffs, clamp=CLAMP):
    """ (k1, k2) of stacked (..., 6) coefficients

    Eigenvalues of I^-1 II at u = v = 0, negated so that surfaces bending
    away from the camera-facing normal (convex toward the camera) are
    positive; sorted and clamped. """

    coeffs = np.asarray(coeffs, dtype=np.float64)
    a, b, c, d, e = [coeffs[..., i] for i in range(5)]

    w2 = 1.0 + d * d + e * e
    w = np.sqrt(w2)

    trace = ((1.0 + e * e) * 2 * a - 2 * d * e * b + (1.0 + d * d) * 2 * c) / (w2 * w)
    det = (4 * a * c - b * b) / (w2 * w2)

    mean = 0.5 * trace
    root = np.sqrt(np.maximum(mean * mean - det, 0.0))

    k1 = np.clip(-mean + root, -clamp, clamp)
    k2 = np.clip(-mean - root, -clamp, clamp)

    return k1, k2


def normal_from_quadric(q):
    n = _normals(q.frame[None], q.coeffs[None], (q.origin if q.origin is not None else -q.frame[2])[None])
    return n[0]


def curvature_from_quadric(q, clamp=CLAMP):
    k1, k2 = principal_curvatures(q.coeffs, clamp)
    return float(k1), float(k2)


def dense_geometry(depth, intr, spec, threads=None, clamp=CLAMP):
    """ Quadric normals and curvatures at every valid pixel

    Work is split in fixed row blocks; each block writes its own rows, so
    the output does not depend on the number of threads. """

    cloud = backproject(depth, intr)
    height, width = cloud.height, cloud.width

    normals = np.zeros((height, width, 3))
    k1 = np.zeros((height, width))
    k2 = np.zeros((height, width))
    mask = np.zeros((height, width), dtype=bool)

    offsets = spec.sample_offsets
    cols_all = np.arange(width)

    def run(r0):
        r1 = min(r0 + BLOCK_ROWS, height)
        rows, cols = np.divmod(np.arange(r0 * width, r1 * width), width)

        keep = cloud.mask[rows, cols]
        rows, cols = rows[keep], cols[keep]

        if not len(rows):
            return

        samples, valid = _gather(cloud, rows, cols, offsets)
        enough = valid.sum(axis=1) >= spec.min_samples
        rows, cols, samples, valid = rows[enough], cols[enough], samples[enough], valid[enough]

        if not len(rows):
            return

        centers = cloud.points[rows, cols]
        samples = np.where(valid[..., None], samples, 0.0)
        frames, coeffs, ok = _fit_batch(samples, valid, centers)

        rows, cols = rows[ok], cols[ok]
        frames, coeffs, centers = frames[ok], coeffs[ok], centers[ok]

        normals[rows, cols] = _normals(frames, coeffs, centers)
        k1[rows, cols], k2[rows, cols] = principal_curvatures(coeffs, clamp)
        mask[rows, cols] = True

    blocks = list(range(0, height, BLOCK_ROWS))
    threads = THREADS if threads is None else threads

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, blocks))

    else:
        for r0 in blocks:
            run(r0)

    log('dense geometry: %s/%s pixels fitted' % (mask.sum(), cloud.mask.sum()))

    return NormalMap(normals, mask), CurvatureMap(k1, k2, mask)


def occlusion_band(depth, spec, jump=0.05):
    " Pixels whose patch reaches a depth discontinuity (> jump meters) or a hole "

    data, mask = depth.data, depth.mask
    edges = ~mask.copy()

    for axis in (0, 1):
        diff = np.abs(np.diff(data, axis=axis))
        both = np.logical_and(np.take(mask, range(mask.shape[axis] - 1), axis=axis),
            np.take(mask, range(1, mask.shape[axis]), axis=axis))
        cut = (diff > jump) & both

        lo = [(0, 1) if a == axis else (0, 0) for a in (0, 1)]
        hi = [(1, 0) if a == axis else (0, 0) for a in (0, 1)]
        edges |= np.pad(cut, lo) | np.pad(cut, hi)

    r = int(np.ceil(spec.radius_px))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    disk = xx * xx + yy * yy <= spec.radius_px ** 2

    return ndimage.binary_dilation(edges, structure=disk)
