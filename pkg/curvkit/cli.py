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

import argparse
import json
import sys

from . import formats, toynet
from .curvkit import (CapacityRun, CurvatureRender, DatasetBuild, DatasetSave,
                      EvalRun, GeometryFetch, ModelTrain, Options, SegmentRun,
                      Settings)
from .util import CurvkitException, atomic_write, log, to_ints

try:
    from importlib.metadata import PackageNotFoundError, version
except ImportError:
    version = None


def package_version():
    if version is None:
        return 'dev'

    try:
        return version('curvkit')

    except PackageNotFoundError:
        return 'dev'


def version_text():
    return '\n'.join([
        'curvkit %s' % package_version(),
        'pfm Pf/PF, little-endian written, both endians read',
        'manifest %s' % formats.MANIFEST_VERSION,
        'model %s' % toynet.MODEL_VERSION,
        ])


class VersionAction(argparse.Action):
    def __init__(self, option_strings, dest, **kwargs):
        super(VersionAction, self).__init__(option_strings, dest, nargs=0, **kwargs)

    def __call__(self, parser, namespace, values, option_string=None):
        print(version_text())
        parser.exit()


def write_json(data, path):
    text = json.dumps(data, indent=2, sort_keys=True)

    if path:
        atomic_write(path, (text + '\n').encode('utf-8'))

    else:
        print(text)


def build_parser():
    parser = argparse.ArgumentParser(
        prog='curvkit',
        description='Depth to normals and principal curvatures, multi-task losses, metrics and a toy network',
        epilog='GNU AGPLv3 code'
        )

    parser.add_argument('--version', action=VersionAction, help='print package and file format versions')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', action='store', type=str, metavar='FILE', help='ini file overriding the bundled defaults')

    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    p = sub.add_parser('synth', parents=[common], help='render a synthetic dataset')
    p.add_argument('--scenes', required=True, type=int, help='number of scenes')
    p.add_argument('--seed', default=0, type=int)
    p.add_argument('--noise', type=float, help='depth noise std-dev in meters')
    p.add_argument('--derive', choices=('analytic', 'quadric'), help='where normals and curvature come from')
    p.add_argument('--augment', default=0, type=int, metavar='N', help='augmented copies per scene')
    p.add_argument('--radius', type=float, help='patch radius in pixels (quadric derivation)')
    p.add_argument('--out', required=True, metavar='DIR')

    p = sub.add_parser('geometry', parents=[common], help='dense normals and curvature from a depth map')
    p.add_argument('--depth', required=True, metavar='PFM')
    p.add_argument('--intrinsics', metavar='FILE', help='key=value camera file, default is the [camera] section')
    p.add_argument('--out-normals', metavar='PFM')
    p.add_argument('--out-curv', metavar='PFM')
    p.add_argument('--out-mask', metavar='PNG', help='validity mask of the output')
    p.add_argument('--radius', type=float, help='patch radius in pixels')
    p.add_argument('--downsample', metavar='WxH', help='bicubic-downsample the fitted maps to this size')
    p.add_argument('--mask-boundary', action='store_true', help='invalidate pixels whose patch crosses an occlusion boundary')
    p.add_argument('--force', action='store_true', help='ignore cached results')

    p = sub.add_parser('train', parents=[common], help='train the toy network')
    p.add_argument('--data', required=True, metavar='DIR')
    p.add_argument('--tasks', default=None, help='comma separated subset of depth,normals,curvature')
    p.add_argument('--seed', type=int)
    p.add_argument('--epochs', type=int)
    p.add_argument('--lr', type=float, dest='learning_rate')
    p.add_argument('--holdout', type=float)
    p.add_argument('--out', required=True, metavar='MODEL')
    p.add_argument('--report', metavar='JSON')

    p = sub.add_parser('capacity-experiment', parents=[common], help='single-task vs joint training at equal capacity')
    p.add_argument('--data', required=True, metavar='DIR')
    p.add_argument('--seeds', default='1', help='comma separated seeds')
    p.add_argument('--epochs', type=int)
    p.add_argument('--holdout', type=float)
    p.add_argument('--out', metavar='JSON')

    p = sub.add_parser('eval', parents=[common], help='metric tables')
    p.add_argument('--task', choices=toynet.TASKS)
    p.add_argument('--pred', metavar='PFM')
    p.add_argument('--gt', metavar='PFM')
    p.add_argument('--mask', metavar='PFM', help='only finite positive pixels are evaluated')
    p.add_argument('--upsample', type=float, help='upsampling factor applied to the prediction')
    p.add_argument('--pred-scale', type=float, help='curvature scale stored in the prediction')
    p.add_argument('--gt-scale', type=float, help='curvature scale stored in the ground truth')
    p.add_argument('--per-channel', action='store_true', help='within-sigma fractions on k1 and k2 errors')
    p.add_argument('--model', metavar='MODEL', help='evaluate a trained model on --data instead')
    p.add_argument('--data', metavar='DIR')
    p.add_argument('--json', metavar='JSON')

    p = sub.add_parser('segment', parents=[common], help='border map from the border function')
    p.add_argument('--rgb', required=True, metavar='PNG')
    p.add_argument('--depth', metavar='PFM', help='ground truth depth')
    p.add_argument('--curv', metavar='PFM', help='ground truth curvature')
    p.add_argument('--pred-depth', metavar='PFM')
    p.add_argument('--pred-curv', metavar='PFM')
    p.add_argument('--depth-source', choices=('groundtruth', 'predicted'))
    p.add_argument('--curv-source', choices=('groundtruth', 'predicted'))
    p.add_argument('--curv-scale', type=float, help='scale stored in the curvature files')
    p.add_argument('--wi', type=float)
    p.add_argument('--wd', type=float)
    p.add_argument('--wc', type=float)
    p.add_argument('--thresh', type=float)
    p.add_argument('--reduction', choices=('mean_abs', 'max_abs', 'abs_mean'))
    p.add_argument('--out', required=True, metavar='PNG')

    p = sub.add_parser('render-curvature', parents=[common], help='colour-coded curvature map')
    p.add_argument('--curv', required=True, metavar='PFM')
    p.add_argument('--scale', type=float, help='scale stored in the file')
    p.add_argument('--planar', type=float, help='planar when both |k| are below this (m^-1)')
    p.add_argument('--out', required=True, metavar='PNG')

    return parser


def run_synth(options, settings):
    samples = DatasetBuild(options, settings)
    manifest = DatasetSave(samples, options.out)

    log('%s samples written to %s' % (len(manifest), options.out))


def run_geometry(options, settings):
    depth = formats.load_depth(options.depth)

    if options.intrinsics:
        intr = formats.read_intrinsics(options.intrinsics, {'width': depth.width, 'height': depth.height})

    else:
        intr = settings.camera()

    normals, curv = GeometryFetch(depth, intr, settings.patch(options.radius), options, clamp=settings.clamp())

    if options.out_normals:
        formats.save_map(normals, options.out_normals)

    if options.out_curv:
        formats.save_map(curv, options.out_curv)

    if options.out_mask:
        formats.write_mask(normals.mask, options.out_mask)


def run_train(options, settings):
    tasks = options.tasks.split(',') if options.tasks else None
    config = settings.network(task_set=tasks, seed=options.seed, epochs=options.epochs, learning_rate=options.learning_rate)
    holdout = settings.num('dataset', 'holdout') if options.holdout is None else options.holdout

    net, report = ModelTrain(formats.load_dataset(options.data), config, holdout)

    toynet.save_model(net, options.out)

    if options.report:
        write_json(report, options.report)


def run_capacity(options, settings):
    config = settings.network(epochs=options.epochs)
    holdout = settings.num('dataset', 'holdout') if options.holdout is None else options.holdout

    report = CapacityRun(formats.load_dataset(options.data), config, to_ints(options.seeds), holdout)
    write_json(report, options.out)


def run_eval(options, settings):
    if options.model:
        if not options.data:
            raise CurvkitException('--model needs --data')

        net = toynet.load_model(options.model)
        write_json(toynet.evaluate(net, formats.load_dataset(options.data)), options.json)
        return

    if not (options.task and options.pred and options.gt):
        raise CurvkitException('eval needs --task, --pred and --gt (or --model and --data)')

    write_json(EvalRun(options.task, options.pred, options.gt, options, settings), options.json)


def run_segment(options, settings):
    scale = options.curv_scale or 1.0

    def pair(depth_path, curv_path):
        if not depth_path and not curv_path:
            return None

        depth = formats.load_depth(depth_path) if depth_path else None
        curv = formats.load_curvature(curv_path) if curv_path else None

        if curv is not None and scale != 1.0:
            curv = curv.scaled(1.0 / scale)

        return depth, curv

    groundtruth = pair(options.depth, options.curv)
    predicted = pair(options.pred_depth, options.pred_curv)

    for source, index, flag in ((options.depth_source, 0, 'depth'), (options.curv_source, 1, 'curv')):
        chosen = predicted if source == 'predicted' else groundtruth

        if chosen is None or chosen[index] is None:
            raise CurvkitException('No %s %s map given' % (source or 'groundtruth', flag))

    weights = settings.border_weights(options.wi, options.wd, options.wc, options.thresh)
    options['reduction'] = options.reduction or settings.get('segment', 'reduction')

    border = SegmentRun(formats.read_rgb(options.rgb), weights, groundtruth, predicted, options)
    formats.write_mask(border.data, options.out)


def run_render(options, settings):
    img = CurvatureRender(formats.load_curvature(options.curv), options, settings)
    formats.write_png(img, options.out)


COMMANDS = {
    'synth': run_synth,
    'geometry': run_geometry,
    'train': run_train,
    'capacity-experiment': run_capacity,
    'eval': run_eval,
    'segment': run_segment,
    'render-curvature': run_render,
    }


def cli_dispatch(argv=None):
    " -> exit code: 0 ok, 1 curvkit error, 2 usage error "

    parser = build_parser()

    try:
        args = parser.parse_args(argv)

    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    options = Options(vars(args))

    try:
        settings = Settings(options.config)
        COMMANDS[options.command](options, settings)

    except CurvkitException as e:
        print('ERROR: %s' % e, file=sys.stderr)
        return 1

    except (IOError, OSError) as e:
        print('ERROR: %s' % e, file=sys.stderr)
        return 1

    return 0