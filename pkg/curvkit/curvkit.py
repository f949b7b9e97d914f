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

import os

import numpy as np

from . import augment, caching, formats, quadric, segment, synth, toynet
from .geom import CLAMP, CameraIntrinsics, CurvatureMap, DepthMap, NormalMap
from .metrics import eval_curvature, eval_depth, eval_normals, upsample_prediction
from .util import (CurvkitException, DivergenceError, FormatError, log,
                   parse_config, to_bool, to_ints)

__all__ = ['CurvkitException', 'DivergenceError', 'FormatError', 'log', 'Options', 'Settings',
    'DatasetBuild', 'DatasetSave', 'GeometryFetch', 'ModelTrain', 'CapacityRun', 'EvalRun',
    'SegmentRun', 'CurvatureRender', 'colorize_curvature']

# render-curvature palette
CONVEX = (0.15, 0.35, 0.95)
CONCAVE = (0.95, 0.2, 0.15)
SADDLE = (0.2, 0.8, 0.25)
PLANAR = (1.0, 1.0, 1.0)
INVALID = (0.0, 0.0, 0.0)


class Options(object):
    def __init__(self, options=None, **args):
        if len(args):
            self.options = args
            self.options.update(options or {})

        else:
            self.options = options or {}

    def __getattr__(self, key, default=None):
        if key in self.options:
            return self.options[key]

        else:
            return default

    def __setitem__(self, key, value):
        self.options[key] = value

    def __contains__(self, key):
        return key in self.options

    get = __getitem__ = __getattr__


class Settings(object):
    """ Typed view over the ini sections, bundled defaults underneath """

    def __init__(self, filename=None):
        self.raw = parse_config(filename)

    def get(self, section, key):
        try:
            return self.raw[section][key]

        except KeyError:
            raise CurvkitException('Missing [%s] %s in the configuration' % (section, key))

    def num(self, section, key):
        try:
            return float(self.get(section, key))

        except ValueError:
            raise CurvkitException('[%s] %s is not a number' % (section, key))

    def camera(self):
        return CameraIntrinsics(self.num('camera', 'fx'), self.num('camera', 'fy'),
            self.num('camera', 'cx'), self.num('camera', 'cy'),
            int(self.num('camera', 'width')), int(self.num('camera', 'height')))

    def render_camera(self):
        width = int(self.num('dataset', 'render_width'))
        height = int(self.num('dataset', 'render_height'))

        # centered principal point, exact under horizontal flips
        return CameraIntrinsics(self.num('dataset', 'render_fx'), self.num('dataset', 'render_fy'),
            (width - 1) / 2.0, (height - 1) / 2.0, width, height)

    def clamp(self):
        value = self.num('curvature', 'clamp')

        if not 0 < value <= CLAMP:
            raise CurvkitException('[curvature] clamp must lie in (0, %s], got %s' % (CLAMP, value))

        return value

    def patch(self, radius=None):
        return quadric.PatchSpec(
            radius_px=radius or self.num('patch', 'radius'),
            min_samples=int(self.num('patch', 'min_samples')),
            ring_counts=to_ints(self.get('patch', 'rings')))

    def resolution(self, section, key):
        " 'WxH' -> (H, W) "
        width, height = to_ints(self.get(section, key))
        return height, width

    def network(self, **overrides):
        t = 'training'
        weights = dict((x, self.num(t, x + '_weight')) for x in toynet.TASKS)

        kwargs = dict(
            input_res=self.resolution('dataset', 'input_res'),
            trunk_channels=to_ints(self.get('network', 'trunk_channels')),
            coarse_channels=int(self.num('network', 'coarse_channels')),
            fine_channels=int(self.num('network', 'fine_channels')),
            task_set=[x.strip() for x in self.get('network', 'tasks').split(',')],
            heads_always_present=to_bool(self.get('network', 'heads_always_present')),
            activation=self.get('network', 'activation'),
            learning_rate=self.num(t, 'learning_rate'),
            momentum=self.num(t, 'momentum'),
            epochs=int(self.num(t, 'epochs')),
            batch_size=int(self.num(t, 'batch_size')),
            seed=int(self.num(t, 'seed')),
            task_weights=weights,
            coarse_weight=self.num(t, 'coarse_weight'),
            fine_weight=self.num(t, 'fine_weight'),
            per_pixel=to_bool(self.get(t, 'per_pixel')),
            patience=int(self.num(t, 'patience')),
            plateau_tol=self.num(t, 'plateau_tol'),
            grad_clip=self.num(t, 'grad_clip'),
            augment=to_bool(self.get(t, 'augment')),
            augment_rotation=self.num('augment', 'rotation'),
            augment_translation=int(self.num('augment', 'translation')),
            augment_color=(self.num('augment', 'color_min'), self.num('augment', 'color_max')),
            divergence=self.num(t, 'divergence'),
            curvature_exponent=self.num('curvature', 'weight_exponent'),
            )

        kwargs.update(dict((k, v) for k, v in overrides.items() if v is not None))

        return toynet.NetworkConfig(**kwargs)

    def border_weights(self, w_I=None, w_d=None, w_c=None, thresh=None):
        def pick(value, key):
            return self.num('segment', key) if value is None else value

        return segment.BorderWeights(pick(w_I, 'wi'), pick(w_d, 'wd'), pick(w_c, 'wc'), pick(thresh, 'thresh'))


def DatasetBuild(options, settings=None):
    """ Renders the synthetic dataset, plus options.augment random copies of
    every scene (their specs travel with each sample) """

    settings = settings or Settings(options.config)
    n = int(options.scenes or 0)

    samples = synth.make_dataset(n, settings.render_camera(),
        noise_sigma=float(options.noise if options.noise is not None else settings.num('dataset', 'noise')),
        seed=int(options.seed or 0),
        input_res=settings.resolution('dataset', 'input_res'),
        target_res=settings.resolution('dataset', 'target_res'),
        scale=settings.num('curvature', 'scale'),
        derive=options.derive or settings.get('dataset', 'derive'),
        patch=settings.patch(options.radius),
        background_depth=settings.num('dataset', 'background_depth'),
        object_depth=tuple(float(x) for x in settings.get('dataset', 'object_depth').split(',')),
        clamp=settings.clamp())

    copies = int(options.augment or 0)

    if copies < 0:
        raise CurvkitException('--augment takes a non-negative count')

    out = []
    ranges = (settings.num('augment', 'rotation'), int(settings.num('augment', 'translation')),
        (settings.num('augment', 'color_min'), settings.num('augment', 'color_max')))

    for sample in samples:
        out.append(sample)

        for k in range(copies):
            spec = augment.random_spec(sample.seed * 1000 + k, *ranges)
            copy = augment.apply(sample, spec)
            copy.sample_id = '%s-aug%02d' % (sample.sample_id, k)
            out.append(copy)

    return out


def DatasetSave(samples, directory):
    entries = [formats.save_sample(x, directory) for x in samples]
    manifest = formats.Manifest(entries)
    formats.write_manifest(manifest, os.path.join(directory, 'manifest.jsonl'))

    return manifest


def GeometryFetch(depth, intr, spec, options=None, cache=None, clamp=CLAMP):
    """ dense normals and curvature for a depth map, through the geometry cache

    The fit runs on the depth map as given. options.downsample ('WxH')
    bicubic-downsamples the fitted maps afterwards, never the depth. """

    options = options or Options()

    if (depth.height, depth.width) != (intr.height, intr.width):
        raise CurvkitException('Depth is %sx%s, intrinsics are %sx%s' % (depth.width, depth.height, intr.width, intr.height))

    cache = caching.default_cache if cache is None else cache
    key = caching.geometry_key(depth, intr, spec, clamp)

    if not options.force and key in cache:
        log('geometry cache hit')
        normals, curv = caching.unpack_geometry(cache[key])

    else:
        normals, curv = quadric.dense_geometry(depth, intr, spec, clamp=clamp)
        cache[key] = caching.pack_geometry(normals, curv)
        cache.trim()

    if options.mask_boundary:
        keep = normals.mask & ~quadric.occlusion_band(depth, spec)
        normals = NormalMap(normals.data, keep)
        curv = CurvatureMap(curv.k1, curv.k2, keep)

    if options.downsample:
        width, height = to_ints(options.downsample)
        normals = normals.resample(width, height)
        curv = curv.resample(width, height, clamp)

    return normals, curv


def ModelTrain(samples, config, holdout=0.25):
    " -> (net, report) with the training curve and held-out metrics "

    train_set, test_set = toynet.split_dataset(samples, holdout)

    log('training on %s samples, %s held out' % (len(train_set), len(test_set)))

    net, history = toynet.train(train_set, config)

    report = {
        'config': config.as_dict(),
        'param_count': net.param_count(),
        'train': len(train_set),
        'holdout': len(test_set),
        'history': history,
        'metrics': toynet.evaluate(net, test_set) if test_set else None,
        }

    return net, report


def CapacityRun(samples, config, seeds=(1,), holdout=0.25):
    report = toynet.run_capacity_experiment(samples, config, seeds, holdout)
    report['config'] = config.as_dict()

    return report


def _load_task_map(task, path, scale=1.0):
    if task == 'depth':
        return formats.load_depth(path)

    if task == 'normals':
        return formats.load_normals(path)

    curv = formats.load_curvature(path)

    return curv if scale == 1.0 else curv.scaled(1.0 / scale)


def EvalRun(task, pred_path, gt_path, options=None, settings=None):
    """ metric table for a prediction file against a ground-truth file

    options.upsample brings the prediction to ground-truth resolution,
    options.mask is a PFM whose finite positive pixels are evaluated,
    pred_scale / gt_scale undo a stored curvature scale. """

    options = options or Options()
    settings = settings or Settings(options.config)

    if task not in toynet.TASKS:
        raise CurvkitException('Unknown task "%s"' % task)

    pred = _load_task_map(task, pred_path, float(options.pred_scale or 1.0))
    gt = _load_task_map(task, gt_path, float(options.gt_scale or 1.0))

    if options.upsample:
        pred = upsample_prediction(pred, float(options.upsample))

    if (pred.height, pred.width) != (gt.height, gt.width):
        raise CurvkitException('Prediction is %sx%s, ground truth %sx%s (see --upsample)' % (pred.width, pred.height, gt.width, gt.height))

    mask = None

    if options.mask:
        mask = DepthMap(formats.read_pfm(options.mask)).mask

    if task == 'depth':
        result = eval_depth(pred, gt, mask, delta=settings.num('metrics', 'delta'))

    elif task == 'normals':
        angles = tuple(float(x) for x in settings.get('metrics', 'angles').split(','))
        result = eval_normals(pred, gt, mask, angles=angles)

    else:
        sigmas = tuple(float(x) for x in settings.get('metrics', 'sigmas').split(','))
        result = eval_curvature(pred, gt, mask, per_channel=bool(options.per_channel), sigmas=sigmas,
            planar_radius=settings.num('curvature', 'planar_radius'))

    return result.as_dict()


def SegmentRun(rgb, weights, groundtruth=None, predicted=None, options=None):
    options = options or Options()

    return segment.segment_scene(rgb, options.depth_source or 'groundtruth', options.curv_source or 'groundtruth',
        weights, groundtruth=groundtruth, predicted=predicted, reduction=options.reduction or 'mean_abs')


def colorize_curvature(curv, planar_bound=1.0):
    """ convex (both > 0) blue, concave (both < 0) red, mixed signs green,
    planar (both |k| < planar_bound) white, invalid black """

    k1, k2 = curv.k1, curv.k2
    img = np.empty(k1.shape + (3,))
    img[...] = SADDLE

    img[(k1 > 0) & (k2 >= 0)] = CONVEX
    img[(k1 <= 0) & (k2 < 0)] = CONCAVE
    img[(np.abs(k1) < planar_bound) & (np.abs(k2) < planar_bound)] = PLANAR
    img[~curv.mask] = INVALID

    return img


def CurvatureRender(curv, options=None, settings=None):
    options = options or Options()
    settings = settings or Settings(options.config)

    if options.scale:
        curv = curv.scaled(1.0 / float(options.scale))

    bound = float(options.planar or 1.0 / settings.num('curvature', 'planar_radius'))

    if bound <= 0:
        raise CurvkitException('Planar bound must be positive')

    return colorize_curvature(curv, bound)
