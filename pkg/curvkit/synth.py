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

""" Analytic scenes: ray-cast depth with exact normals and curvatures.

Primitive local frames: for the identity pose local axes equal the camera
axes (x right, y down, z forward), so a plane, box face or saddle with the
identity rotation faces the camera along -z.
"""

import numpy as np

from .geom import CLAMP, CurvatureMap, DepthMap, NormalMap, RgbImage
from .quadric import PatchSpec, dense_geometry, principal_curvatures
from .util import CurvkitException, log

LIGHT = np.array([1.0, 1.0, -1.0]) / np.sqrt(3.0) # toward the light
AMBIENT = 0.25
EPS = 1e-9

SHAPES = ('plane', 'sphere', 'cylinder', 'saddle', 'box')


def rotation_from_euler(rx=0.0, ry=0.0, rz=0.0):
    " degrees, applied x then y then z "
    rx, ry, rz = np.radians([rx, ry, rz])

    Rx = np.array([[1, 0, 0], [0, np.cos(rx), -np.sin(rx)], [0, np.sin(rx), np.cos(rx)]])
    Ry = np.array([[np.cos(ry), 0, np.sin(ry)], [0, 1, 0], [-np.sin(ry), 0, np.cos(ry)]])
    Rz = np.array([[np.cos(rz), -np.sin(rz), 0], [np.sin(rz), np.cos(rz), 0], [0, 0, 1]])

    return Rz @ Ry @ Rx


class Pose(object):
    " columns of `rotation` are the local axes in camera coordinates "

    def __init__(self, translation, rotation=None):
        self.translation = np.asarray(translation, dtype=np.float64)
        self.rotation = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)

    @classmethod
    def from_euler(cls, translation, rx=0.0, ry=0.0, rz=0.0):
        return cls(translation, rotation_from_euler(rx, ry, rz))

    def to_local(self, points):
        return (points - self.translation) @ self.rotation

    def to_camera(self, vectors):
        return vectors @ self.rotation.T

    def as_dict(self):
        return {'translation': self.translation.tolist(), 'rotation': self.rotation.tolist()}


class Primitive(object):
    """ size by shape:
        plane    (half_x, half_y)
        sphere   (radius,)
        cylinder (radius, half_length), axis along local x
        saddle   (a, half_extent), height (x^2 - y^2) / 2a toward -z
        box      (half_x, half_y, half_z)
    """

    arity = {'plane': 2, 'sphere': 1, 'cylinder': 2, 'saddle': 2, 'box': 3}

    def __init__(self, shape, pose, size, albedo=(0.7, 0.7, 0.7)):
        if shape not in SHAPES:
            raise CurvkitException('Unknown primitive "%s"' % shape)

        size = tuple(float(x) for x in np.atleast_1d(size))

        if len(size) != self.arity[shape] or min(size) <= 0:
            raise CurvkitException('%s needs %s positive size parameters, got %s' % (shape, self.arity[shape], size))

        self.shape = shape
        self.pose = pose
        self.size = size
        self.albedo = np.clip(np.asarray(albedo, dtype=np.float64), 0.0, 1.0)

    def as_dict(self):
        return {'shape': self.shape, 'pose': self.pose.as_dict(), 'size': list(self.size), 'albedo': self.albedo.tolist()}

    def intersect(self, rays):
        " rays (P, 3) with z == 1 -> (t, normals, k1, k2), t = inf on misses "
        return getattr(self, '_hit_' + self.shape)(rays)

    def _local(self, rays):
        origin = self.pose.to_local(np.zeros(3))
        return origin, rays @ self.pose.rotation

    def _hit_sphere(self, rays):
        radius = self.size[0]
        c = self.pose.translation

        A = np.einsum('pi,pi->p', rays, rays)
        B = -2 * rays @ c
        C = c @ c - radius ** 2

        disc = B * B - 4 * A * C
        with np.errstate(invalid='ignore'):
            t = (-B - np.sqrt(disc)) / (2 * A)

        hit = (disc >= 0) & (t > EPS)
        t = np.where(hit, t, np.inf)

        normals = (rays * np.where(hit, t, 0)[:, None] - c) / radius
        k = np.full(len(rays), 1.0 / radius)

        return t, normals, k, k

    def _hit_cylinder(self, rays):
        radius, half = self.size
        o, d = self._local(rays)

        A = d[:, 1] ** 2 + d[:, 2] ** 2
        B = 2 * (o[1] * d[:, 1] + o[2] * d[:, 2])
        C = o[1] ** 2 + o[2] ** 2 - radius ** 2

        disc = B * B - 4 * A * C
        with np.errstate(invalid='ignore', divide='ignore'):
            t = (-B - np.sqrt(disc)) / (2 * A)

        local = o + d * np.nan_to_num(t, posinf=0.0, neginf=0.0)[:, None]
        hit = (disc >= 0) & (A > EPS) & (t > EPS) & (np.abs(local[:, 0]) <= half)
        t = np.where(hit, t, np.inf)

        n = np.stack([np.zeros(len(rays)), local[:, 1], local[:, 2]], axis=1) / radius

        return t, self.pose.to_camera(n), np.full(len(rays), 1.0 / radius), np.zeros(len(rays))

    def _hit_plane(self, rays):
        hx, hy = self.size
        o, d = self._local(rays)

        with np.errstate(invalid='ignore', divide='ignore'):
            t = -o[2] / d[:, 2]

        local = o + d * np.nan_to_num(t, posinf=0.0, neginf=0.0)[:, None]
        hit = np.isfinite(t) & (t > EPS) & (np.abs(local[:, 0]) <= hx) & (np.abs(local[:, 1]) <= hy)
        t = np.where(hit, t, np.inf)

        n = np.tile(self.pose.rotation[:, 2], (len(rays), 1))
        zero = np.zeros(len(rays))

        return t, n, zero, zero

    def _hit_box(self, rays):
        half = np.array(self.size)
        o, d = self._local(rays)

        with np.errstate(invalid='ignore', divide='ignore'):
            t1 = (-half - o) / d
            t2 = (half - o) / d

        t1 = np.nan_to_num(t1, nan=-np.inf)
        t2 = np.nan_to_num(t2, nan=np.inf)

        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        t_near = lo.max(axis=1)
        t_far = hi.min(axis=1)

        hit = (t_near <= t_far) & (t_near > EPS)
        t = np.where(hit, t_near, np.inf)

        face = lo.argmax(axis=1)
        n = np.zeros((len(rays), 3))
        n[np.arange(len(rays)), face] = -np.sign(d[np.arange(len(rays)), face])
        zero = np.zeros(len(rays))

        return t, self.pose.to_camera(n), zero, zero

    def _hit_saddle(self, rays):
        a, half = self.size
        o, d = self._local(rays)

        A = d[:, 0] ** 2 - d[:, 1] ** 2
        B = 2 * (o[0] * d[:, 0] - o[1] * d[:, 1]) + 2 * a * d[:, 2]
        C = o[0] ** 2 - o[1] ** 2 + 2 * a * o[2]

        with np.errstate(invalid='ignore', divide='ignore'):
            disc = B * B - 4 * A * C
            root = np.sqrt(np.maximum(disc, 0.0))
            quad = np.abs(A) > EPS
            r1 = np.where(quad, (-B - root) / (2 * A), -C / B)
            r2 = np.where(quad, (-B + root) / (2 * A), np.inf)
            usable = ~quad | (disc >= 0)

        def inside(t):
            local = o + d * np.nan_to_num(t, nan=0.0, posinf=0.0, neginf=0.0)[:, None]
            return usable & np.isfinite(t) & (t > EPS) & (np.abs(local[:, 0]) <= half) & (np.abs(local[:, 1]) <= half)

        c1 = np.where(inside(r1), r1, np.inf)
        c2 = np.where(inside(r2), r2, np.inf)
        t = np.minimum(c1, c2)

        local = o + d * np.where(np.isfinite(t), t, 0.0)[:, None]
        hx, hy = local[:, 0] / a, -local[:, 1] / a

        # height axis is local -z
        n = np.stack([-hx, -hy, -np.ones(len(rays))], axis=1)
        n /= np.linalg.norm(n, axis=1)[:, None]
        n = self.pose.to_camera(n)

        coeffs = np.stack([np.full(len(rays), 0.5 / a), np.zeros(len(rays)), np.full(len(rays), -0.5 / a),
            hx, hy, np.zeros(len(rays))], axis=1)
        k1, k2 = principal_curvatures(coeffs, clamp=np.inf)

        # seen from its back side the height axis points away from the camera
        back = np.einsum('pi,pi->p', n, rays) > 0
        n = np.where(back[:, None], -n, n)
        k1, k2 = np.where(back, -k2, k1), np.where(back, -k1, k2)

        return t, n, k1, k2


class SceneSpec(object):
    def __init__(self, primitives, background_depth=None, noise_sigma=0.0, seed=0, background_albedo=(0.6, 0.6, 0.6)):
        if noise_sigma < 0:
            raise CurvkitException('noise_sigma must be >= 0')

        if background_depth is not None and background_depth <= 0:
            raise CurvkitException('background_depth must be positive')

        if not primitives and background_depth is None:
            raise CurvkitException('A scene needs at least one primitive or a background')

        self.primitives = list(primitives)
        self.background_depth = background_depth
        self.noise_sigma = float(noise_sigma)
        self.seed = int(seed)
        self.background_albedo = np.asarray(background_albedo, dtype=np.float64)

    def as_dict(self):
        return {
            'primitives': [x.as_dict() for x in self.primitives],
            'background_depth': self.background_depth,
            'noise_sigma': self.noise_sigma,
            'seed': self.seed,
            }


def shade(normals, albedo):
    lambert = np.clip(normals @ LIGHT, 0.0, 1.0)
    return np.clip(albedo * (AMBIENT + (1 - AMBIENT) * lambert)[..., None], 0.0, 1.0)


def render(spec, intr):
    " -> (RgbImage, DepthMap, NormalMap, CurvatureMap), nearest hit wins "

    rays = intr.rays().reshape(-1, 3)
    count = len(rays)

    hits = []

    for prim in spec.primitives:
        t, n, k1, k2 = prim.intersect(rays)
        hits.append((t, n, k1, k2, np.tile(prim.albedo, (count, 1))))

    if spec.background_depth is not None:
        n = np.tile([0.0, 0.0, -1.0], (count, 1))
        zero = np.zeros(count)
        hits.append((np.full(count, float(spec.background_depth)), n, zero, zero, np.tile(spec.background_albedo, (count, 1))))

    ts = np.stack([h[0] for h in hits])
    best = ts.argmin(axis=0)
    idx = np.arange(count)

    t = ts[best, idx]
    valid = np.isfinite(t)

    normals = np.stack([h[1] for h in hits])[best, idx]
    normals /= np.where(valid, np.linalg.norm(normals, axis=1), 1.0)[:, None]
    normals = np.where((np.einsum('pi,pi->p', normals, rays) > 0)[:, None], -normals, normals)
    k1 = np.stack([h[2] for h in hits])[best, idx]
    k2 = np.stack([h[3] for h in hits])[best, idx]
    albedo = np.stack([h[4] for h in hits])[best, idx]

    shape = (intr.height, intr.width)
    normals = np.where(valid[:, None], normals, 0.0).reshape(shape + (3,))
    depth = np.where(valid, t, 0.0).reshape(shape)
    valid = valid.reshape(shape)

    rgb = np.where(valid[..., None], shade(normals, albedo.reshape(shape + (3,))), 0.0)

    if spec.noise_sigma > 0:
        # perturbs depth only, ground-truth channels stay exact
        rng = np.random.default_rng(spec.seed)
        depth = np.where(valid, depth + rng.normal(0.0, spec.noise_sigma, shape), 0.0)

    return (RgbImage(rgb), DepthMap(depth, valid), NormalMap.normalized(normals, valid),
        CurvatureMap.from_pair(k1.reshape(shape), k2.reshape(shape), valid))


def random_scene(seed, background_depth=3.0, object_depth=(1.8, 2.4), noise_sigma=0.0, max_objects=3):
    rng = np.random.default_rng(seed)
    primitives = []

    for _ in range(int(rng.integers(1, max_objects + 1))):
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        z = rng.uniform(*object_depth)
        xy = rng.uniform(-0.3, 0.3, 2) * z
        albedo = rng.uniform(0.2, 1.0, 3)
        rx, ry, rz = rng.uniform(-30, 30, 3)

        if shape == 'sphere':
            radius = rng.uniform(0.15, 0.35)
            prim = Primitive('sphere', Pose([xy[0], xy[1], z + radius]), (radius,), albedo)

        elif shape == 'cylinder':
            prim = Primitive('cylinder', Pose.from_euler([xy[0], xy[1], z + 0.2], rz=rz, ry=ry),
                (rng.uniform(0.1, 0.25), rng.uniform(0.3, 0.6)), albedo)

        elif shape == 'box':
            prim = Primitive('box', Pose.from_euler([xy[0], xy[1], z + 0.2], rx, ry, rz),
                tuple(rng.uniform(0.1, 0.3, 3)), albedo)

        elif shape == 'saddle':
            prim = Primitive('saddle', Pose.from_euler([xy[0], xy[1], z], rx, ry, rz),
                (rng.uniform(0.5, 1.5), rng.uniform(0.2, 0.4)), albedo)

        else:
            prim = Primitive('plane', Pose.from_euler([xy[0], xy[1], z], rx, ry, rz),
                tuple(rng.uniform(0.2, 0.5, 2)), albedo)

        primitives.append(prim)

    return SceneSpec(primitives, background_depth, noise_sigma, seed)


class Sample(object):
    " one training example, curvature stored pre-multiplied by curvature_scale "

    def __init__(self, rgb, depth, normals, curvature, curvature_scale=0.1, seed=0, intrinsics=None, augment=None, sample_id=None):
        self.rgb = rgb
        self.depth = depth
        self.normals = normals
        self.curvature = curvature
        self.curvature_scale = float(curvature_scale)
        self.seed = seed
        self.intrinsics = intrinsics
        self.augment = augment
        self.sample_id = sample_id

    def unscaled_curvature(self):
        return self.curvature.scaled(1.0 / self.curvature_scale)


def make_dataset(n_scenes, intr, noise_sigma=0.0, seed=0, input_res=(64, 64), target_res=(32, 32),
        scale=0.1, derive='analytic', patch=None, background_depth=3.0, object_depth=(1.8, 2.4), clamp=CLAMP):
    """ Renders n_scenes random scenes at `intr` resolution

    RGB is resampled to input_res, depth/normals/curvature to target_res
    (both (H, W)). derive='quadric' recomputes normals and curvature from
    the (noisy) rendered depth instead of using the analytic channels.
    Curvatures are bounded by +/-clamp before scaling. """

    if n_scenes < 1:
        raise CurvkitException('n_scenes must be >= 1')

    if derive not in ('analytic', 'quadric'):
        raise CurvkitException('derive must be "analytic" or "quadric"')

    patch = patch or PatchSpec()
    seeds = np.random.default_rng(seed).integers(0, 2 ** 31 - 1, n_scenes)
    target = intr.resized(target_res[1], target_res[0])
    samples = []

    for i, scene_seed in enumerate(seeds):
        scene = random_scene(int(scene_seed), background_depth, object_depth, noise_sigma)
        rgb, depth, normals, curv = render(scene, intr)

        if derive == 'quadric':
            normals, curv = dense_geometry(depth, intr, patch, clamp=clamp)

        samples.append(Sample(
            rgb.resample(input_res[1], input_res[0]),
            depth.resample(target_res[1], target_res[0]),
            normals.resample(target_res[1], target_res[0]),
            curv.resample(target_res[1], target_res[0], clamp).scaled(scale),
            curvature_scale=scale, seed=int(scene_seed), intrinsics=target,
            sample_id='scene-%04d' % i))

        log('scene %s/%s rendered' % (i + 1, n_scenes))

    return samples
