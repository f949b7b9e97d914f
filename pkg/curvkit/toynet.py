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

""" Small two-stage multi-task convnet, numpy only

Layout for an HxW input (H, W multiples of 4):

    trunk    conv3x3 3->c0, conv3x3/2 c0->c1 (skip, H/2), conv3x3/2 c1->c2 (H/4)
    coarse   per task: conv5x5 c2->cc, conv5x5 cc->cc, conv5x5 head (H/4)
    upsample every coarse prediction 2x nearest, concat with the skip
    fine     per task: conv5x5 ->fc, conv5x5 fc->fc, conv5x5 head (H/2)

With heads_always_present every task stack is built whatever the trained
task set is, so the parameter count never depends on it. Untrained coarse
heads still feed the fine stage as plain feature maps.

Depth heads predict log depth, normal heads raw 3-vectors, curvature
heads the scaled principal curvature pair.
"""

import json
import struct
from collections import OrderedDict

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import augment
from .geom import CurvatureMap, DepthMap, NormalMap, RgbImage
from .losses import LOSSES
from .metrics import eval_curvature, eval_depth, eval_normals, upsample_prediction
from .util import CurvkitException, DivergenceError, FormatError, atomic_write, log

TASKS = ('depth', 'normals', 'curvature')
HEAD_CHANNELS = {'depth': 1, 'normals': 3, 'curvature': 2}
SCALES = ('coarse', 'fine')
ACTIVATIONS = ('relu', 'identity')

MODEL_MAGIC = b'CURVKNET'
MODEL_VERSION = 1

CAPACITY_CONFIGS = (
    ('depth',),
    ('normals',),
    ('depth', 'normals'),
    ('depth', 'normals', 'curvature'),
    )


class TensorBuffer(object):
    " values and their gradient accumulator "

    def __init__(self, data):
        self.data = np.array(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)

    @property
    def dims(self):
        return self.data.shape

    def zero_grad(self):
        self.grad[...] = 0.0


class NetworkConfig(object):
    fields = ('input_res', 'trunk_channels', 'coarse_channels', 'fine_channels', 'task_set',
        'heads_always_present', 'activation', 'learning_rate', 'momentum', 'epochs', 'batch_size',
        'seed', 'task_weights', 'coarse_weight', 'fine_weight', 'per_pixel', 'patience',
        'plateau_tol', 'grad_clip', 'augment', 'augment_rotation', 'augment_translation',
        'augment_color', 'divergence', 'curvature_exponent')

    def __init__(self, input_res=(64, 64), trunk_channels=(8, 16, 16), coarse_channels=16, fine_channels=16,
            task_set=TASKS, heads_always_present=True, activation='relu', learning_rate=0.01, momentum=0.95,
            epochs=50, batch_size=4, seed=1, task_weights=None, coarse_weight=1.0, fine_weight=1.0,
            per_pixel=True, patience=5, plateau_tol=0.002, grad_clip=5.0, augment=True,
            augment_rotation=augment.ROTATION, augment_translation=augment.TRANSLATION,
            augment_color=augment.COLOR, divergence=1e6, curvature_exponent=-2.0):

        self.input_res = tuple(int(x) for x in input_res)
        self.trunk_channels = tuple(int(x) for x in trunk_channels)
        self.coarse_channels = int(coarse_channels)
        self.fine_channels = int(fine_channels)
        self.task_set = tuple(x for x in TASKS if x in task_set)
        self.heads_always_present = bool(heads_always_present)
        self.activation = activation
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.seed = int(seed)
        self.task_weights = dict((x, 1.0) for x in TASKS)
        self.task_weights.update(task_weights or {})
        self.coarse_weight = float(coarse_weight)
        self.fine_weight = float(fine_weight)
        self.per_pixel = bool(per_pixel)
        self.patience = int(patience)
        self.plateau_tol = float(plateau_tol)
        self.grad_clip = float(grad_clip)
        self.augment = bool(augment)
        self.augment_rotation = float(augment_rotation)
        self.augment_translation = int(augment_translation)
        self.augment_color = tuple(float(x) for x in augment_color)
        self.divergence = float(divergence)
        self.curvature_exponent = float(curvature_exponent)

        self.validate(task_set)

    def validate(self, task_set):
        if len(self.input_res) != 2 or min(self.input_res) < 4 or any(x % 4 for x in self.input_res):
            raise CurvkitException('input_res must be two multiples of 4, got %s' % (self.input_res,))

        if len(self.trunk_channels) != 3 or min(self.trunk_channels) < 1:
            raise CurvkitException('trunk_channels needs three positive counts')

        if self.coarse_channels < 1 or self.fine_channels < 1:
            raise CurvkitException('Stage channel counts must be positive')

        unknown = set(task_set) - set(TASKS)

        if unknown or not self.task_set:
            raise CurvkitException('task_set must be a non-empty subset of %s' % (TASKS,))

        if self.activation not in ACTIVATIONS:
            raise CurvkitException('Unknown activation "%s"' % self.activation)

        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise CurvkitException('Need learning_rate >= 0 and 0 <= momentum < 1')

        if self.epochs < 0 or self.batch_size < 1:
            raise CurvkitException('Need epochs >= 0 and batch_size >= 1')

        if min(self.coarse_weight, self.fine_weight) < 0 or min(self.task_weights.values()) <= 0:
            raise CurvkitException('Task weights must be positive, scale weights non-negative')

    @property
    def heads(self):
        return TASKS if self.heads_always_present else self.task_set

    def replace(self, **kwargs):
        d = self.as_dict()
        d.update(kwargs)
        return NetworkConfig(**d)

    def as_dict(self):
        d = dict((x, getattr(self, x)) for x in self.fields)

        for key in ('input_res', 'trunk_channels', 'task_set', 'augment_color'):
            d[key] = list(d[key])

        d['task_weights'] = dict(d['task_weights'])

        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def __eq__(self, other):
        return isinstance(other, NetworkConfig) and self.as_dict() == other.as_dict()


class TaskSolver(object):
    " one loss attached to one task's heads "

    def __init__(self, task, weight=1.0, loss=None):
        if task not in TASKS:
            raise CurvkitException('Unknown task "%s"' % task)

        if weight <= 0:
            raise CurvkitException('Solver weight must be > 0')

        self.task = task
        self.weight = float(weight)
        self.loss = loss or LOSSES[task]

    def __repr__(self):
        return 'TaskSolver(%r, weight=%r)' % (self.task, self.weight)


def make_solvers(config):
    return [TaskSolver(x, config.task_weights[x]) for x in config.task_set]


# layers

class Conv2d(object):
    def __init__(self, name, in_channels, out_channels, kernel, stride=1, rng=None):
        self.name = name
        self.kernel = kernel
        self.stride = stride
        self.pad = kernel // 2

        shape = (out_channels, in_channels, kernel, kernel)

        if rng is None:
            weight = np.zeros(shape)

        else:
            # fan-in scaled gaussian, variance 2 / fan_in
            weight = rng.normal(0.0, np.sqrt(2.0 / (in_channels * kernel * kernel)), shape)

        self.weight = TensorBuffer(weight)
        self.bias = TensorBuffer(np.zeros(out_channels))

    def parameters(self):
        return [(self.name + '.weight', self.weight), (self.name + '.bias', self.bias)]

    def forward(self, x):
        p, s = self.pad, self.stride
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        windows = sliding_window_view(padded, (self.kernel, self.kernel), axis=(2, 3))[:, :, ::s, ::s]

        self.cache = (x.shape, padded.shape, windows)

        out = np.einsum('nchwij,ocij->nohw', windows, self.weight.data, optimize=True)
        return out + self.bias.data[None, :, None, None]

    def backward(self, grad):
        x_shape, padded_shape, windows = self.cache
        p, s, k = self.pad, self.stride, self.kernel
        ho, wo = grad.shape[2:]

        self.weight.grad += np.einsum('nchwij,nohw->ocij', windows, grad, optimize=True)
        self.bias.grad += grad.sum(axis=(0, 2, 3))

        dwin = np.einsum('nohw,ocij->nchwij', grad, self.weight.data, optimize=True)
        dpad = np.zeros(padded_shape)

        for i in range(k):
            for j in range(k):
                dpad[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += dwin[..., i, j]

        return dpad[:, :, p:p + x_shape[2], p:p + x_shape[3]]


class ReLU(object):
    def parameters(self):
        return []

    def forward(self, x):
        self.cache = x > 0
        return np.where(self.cache, x, 0.0)

    def backward(self, grad):
        return np.where(self.cache, grad, 0.0)


class Identity(object):
    def parameters(self):
        return []

    def forward(self, x):
        return x

    def backward(self, grad):
        return grad


class Stack(object):
    def __init__(self, layers):
        self.layers = layers

    def parameters(self):
        return [x for layer in self.layers for x in layer.parameters()]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)

        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)

        return grad


def upsample2(x):
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample2_backward(grad):
    n, c, h, w = grad.shape
    return grad.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


class Network(object):
    def __init__(self, config, rng=None):
        self.config = config

        def act():
            return ReLU() if config.activation == 'relu' else Identity()

        c0, c1, c2 = config.trunk_channels
        cc, fc = config.coarse_channels, config.fine_channels
        concat = c1 + sum(HEAD_CHANNELS[x] for x in config.heads)

        self.trunk = Stack([Conv2d('trunk.0', 3, c0, 3, 1, rng), act(), Conv2d('trunk.1', c0, c1, 3, 2, rng), act()])
        self.trunk_deep = Stack([Conv2d('trunk.2', c1, c2, 3, 2, rng), act()])

        self.coarse = OrderedDict()
        self.fine = OrderedDict()

        for task in config.heads:
            out = HEAD_CHANNELS[task]

            self.coarse[task] = Stack([
                Conv2d('coarse.%s.0' % task, c2, cc, 5, 1, rng), act(),
                Conv2d('coarse.%s.1' % task, cc, cc, 5, 1, rng), act(),
                Conv2d('coarse.%s.head' % task, cc, out, 5, 1, rng),
                ])

        for task in config.heads:
            out = HEAD_CHANNELS[task]

            self.fine[task] = Stack([
                Conv2d('fine.%s.0' % task, concat, fc, 5, 1, rng), act(),
                Conv2d('fine.%s.1' % task, fc, fc, 5, 1, rng), act(),
                Conv2d('fine.%s.head' % task, fc, out, 5, 1, rng),
                ])

    @property
    def heads(self):
        return tuple(self.coarse)

    def parameters(self):
        stacks = [self.trunk, self.trunk_deep] + list(self.coarse.values()) + list(self.fine.values())
        return [x for stack in stacks for x in stack.parameters()]

    def param_count(self):
        return sum(buf.data.size for _, buf in self.parameters())

    def zero_grad(self):
        for _, buf in self.parameters():
            buf.zero_grad()

    def forward(self, x):
        """ (N, 3, H, W) batch -> {task: {'coarse': (N, C, H/4, W/4), 'fine': (N, C, H/2, W/2)}}

        Every built head is returned, trained or not. """

        x = np.asarray(x, dtype=np.float64)

        if x.ndim != 4 or x.shape[1] != 3 or tuple(x.shape[2:]) != self.config.input_res:
            raise CurvkitException('Network expects (N, 3, %s, %s) input, got %s' % (self.config.input_res + (x.shape,)))

        skip = self.trunk.forward(x)
        deep = self.trunk_deep.forward(skip)

        coarse = OrderedDict((t, self.coarse[t].forward(deep)) for t in self.heads)
        fine_in = np.concatenate([skip] + [upsample2(coarse[t]) for t in self.heads], axis=1)

        self._skip_channels = skip.shape[1]

        return OrderedDict((t, {'coarse': coarse[t], 'fine': self.fine[t].forward(fine_in)}) for t in self.heads)

    def backward(self, grads):
        " grads: {task: {'coarse': array or None, 'fine': array or None}} from the last forward "

        fine_in_grad = None

        for task in self.heads:
            g = grads.get(task, {}).get('fine')

            if g is not None:
                gin = self.fine[task].backward(g)
                fine_in_grad = gin if fine_in_grad is None else fine_in_grad + gin

        c1 = self._skip_channels
        offset = c1
        deep_grad = None

        for task in self.heads:
            width = HEAD_CHANNELS[task]
            g = grads.get(task, {}).get('coarse')

            if fine_in_grad is not None:
                up = upsample2_backward(fine_in_grad[:, offset:offset + width])
                g = up if g is None else g + up

            offset += width

            if g is not None:
                gin = self.coarse[task].backward(g)
                deep_grad = gin if deep_grad is None else deep_grad + gin

        skip_grad = None if fine_in_grad is None else fine_in_grad[:, :c1]

        if deep_grad is not None:
            d = self.trunk_deep.backward(deep_grad)
            skip_grad = d if skip_grad is None else skip_grad + d

        if skip_grad is not None:
            self.trunk.backward(skip_grad)


def build(config, zero=False):
    " zero=True leaves all weights at 0 "
    rng = None if zero else np.random.default_rng(config.seed)
    return Network(config, rng)


def to_batch(rgbs):
    return np.stack([np.asarray(x.data if isinstance(x, RgbImage) else x).transpose(2, 0, 1) for x in rgbs])


def forward(net, rgb):
    " RgbImage (or a list of them) -> per-task coarse and fine predictions "

    single = not isinstance(rgb, (list, tuple))
    out = net.forward(to_batch([rgb] if single else rgb))

    if single:
        return OrderedDict((t, dict((s, v[0]) for s, v in out[t].items())) for t in out)

    return out


class NesterovSGD(object):
    """ v = mu v + g ; w -= lr (g + mu v) """

    def __init__(self, params, learning_rate, momentum):
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)
        self.velocity = OrderedDict((name, np.zeros_like(buf.data)) for name, buf in params)

    def step(self, params):
        mu = self.momentum

        for name, buf in params:
            v = self.velocity[name]
            v *= mu
            v += buf.grad
            buf.data -= self.learning_rate * (buf.grad + mu * v)


# losses on network outputs

def _at(m, height, width):
    if (m.height, m.width) == (height, width):
        return m

    return m.resample(width, height)


def _task_loss(solver, pred, sample, config):
    " pred (C, h, w) for one sample -> (value, grad (C, h, w)) or None when nothing is valid "

    h, w = pred.shape[1:]
    depth = _at(sample.depth, h, w)

    if solver.task == 'depth':
        if depth.mask.sum() < 2:
            return None

        r = solver.loss(pred[0], depth.log(), depth.mask)
        return r.value, r.grad[None]

    if solver.task == 'normals':
        normals = _at(sample.normals, h, w)

        if not normals.mask.any():
            return None

        r = solver.loss(pred.transpose(1, 2, 0), normals.data, normals.mask)
        return r.value, r.grad.transpose(2, 0, 1)

    curv = _at(sample.curvature, h, w)
    mask = curv.mask & depth.mask

    if not mask.any():
        return None

    r = solver.loss(pred.transpose(1, 2, 0), curv.stacked(), depth.data, mask, config.curvature_exponent)
    return r.value, r.grad.transpose(2, 0, 1)


def loss_and_gradients(net, batch, solvers, config):
    """ forward + backward, leaves weight gradients in the parameter buffers

    Returns {task: {scale: value}} plus 'total'. Raises DivergenceError
    naming the task and scale of a non-finite or exploding loss. """

    if not batch:
        raise CurvkitException('Empty batch')

    for solver in solvers:
        if solver.task not in net.heads:
            raise CurvkitException('No %s head in this network' % solver.task)

    out = net.forward(to_batch([s.rgb for s in batch]))
    scale_weights = {'coarse': config.coarse_weight, 'fine': config.fine_weight}

    losses = OrderedDict()
    grads = {}
    total = 0.0

    for solver in solvers:
        losses[solver.task] = {}
        grads[solver.task] = {}

        for scale in SCALES:
            pred = out[solver.task][scale]
            norm = float(pred.shape[0] * pred.shape[2] * pred.shape[3]) if config.per_pixel else 1.0
            factor = solver.weight * scale_weights[scale] / norm

            value = 0.0
            grad = np.zeros_like(pred)

            for i, sample in enumerate(batch):
                r = _task_loss(solver, pred[i], sample, config)

                if r is not None:
                    value += r[0]
                    grad[i] = r[1]

            value /= norm

            if not np.isfinite(value) or abs(value) > config.divergence:
                raise DivergenceError('%s loss diverged at %s scale (%r)' % (solver.task, scale, value))

            losses[solver.task][scale] = value
            grads[solver.task][scale] = grad * factor
            total += solver.weight * scale_weights[scale] * value

    net.zero_grad()
    net.backward(grads)

    losses['total'] = total
    return losses


def clip_gradients(params, max_norm):
    if max_norm <= 0:
        return 1.0

    norm = np.sqrt(sum(float((buf.grad ** 2).sum()) for _, buf in params))

    if norm > max_norm:
        for _, buf in params:
            buf.grad *= max_norm / norm

        return max_norm / norm

    return 1.0


def backward_and_step(net, batch, solvers, optimizer, config):
    " one Nesterov step on the batch, returns the per-task losses before the update "

    losses = loss_and_gradients(net, batch, solvers, config)
    params = net.parameters()

    clip_gradients(params, config.grad_clip)
    optimizer.step(params)

    return losses


# training

def split_dataset(samples, holdout=0.25, seed=0):
    " -> (train, held_out), order drawn from seed "

    if not 0 <= holdout < 1:
        raise CurvkitException('holdout must lie in [0, 1)')

    order = np.random.default_rng(seed).permutation(len(samples))
    n_test = int(round(len(samples) * holdout))

    if n_test and n_test >= len(samples):
        n_test = len(samples) - 1

    test = [samples[i] for i in sorted(order[:n_test])]
    train = [samples[i] for i in sorted(order[n_test:])]

    return train, test


def _augment_seed(seed, epoch, index):
    return int(np.random.SeedSequence([seed, epoch, index]).generate_state(1)[0])


def train(samples, config, solvers=None, net=None):
    """ -> (net, history), history is one dict per epoch

    The learning rate is halved whenever the epoch loss has not improved by
    plateau_tol (relative) for patience epochs. """

    if not samples:
        raise CurvkitException('No training samples')

    net = net or build(config)
    solvers = solvers or make_solvers(config)
    optimizer = NesterovSGD(net.parameters(), config.learning_rate, config.momentum)
    rng = np.random.default_rng(config.seed)

    history = []
    best = np.inf
    stale = 0

    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        epoch_loss = 0.0
        per_task = dict((s.task, 0.0) for s in solvers)

        for start in range(0, len(samples), config.batch_size):
            batch = [samples[i] for i in order[start:start + config.batch_size]]

            if config.augment:
                batch = [augment.apply(s, augment.random_spec(_augment_seed(config.seed, epoch, start + j),
                    config.augment_rotation, config.augment_translation, config.augment_color))
                    for j, s in enumerate(batch)]

            losses = backward_and_step(net, batch, solvers, optimizer, config)
            epoch_loss += losses['total'] * len(batch)

            for task in per_task:
                per_task[task] += sum(losses[task].values()) * len(batch)

        epoch_loss /= len(samples)

        history.append({
            'epoch': epoch,
            'loss': epoch_loss,
            'tasks': dict((t, v / len(samples)) for t, v in per_task.items()),
            'learning_rate': optimizer.learning_rate,
            })

        log('epoch %s: loss %.6f (lr %g)' % (epoch, epoch_loss, optimizer.learning_rate))

        if epoch_loss < best * (1.0 - config.plateau_tol):
            best = epoch_loss
            stale = 0

        else:
            stale += 1

            if stale >= config.patience:
                optimizer.learning_rate /= 2.0
                stale = 0
                log('plateau, learning rate halved to %g' % optimizer.learning_rate)

    return net, history


def _mosaic(maps):
    " side by side concatenation, pooling pixels of many maps into one "

    first = maps[0]

    if isinstance(first, DepthMap):
        return DepthMap(np.hstack([m.data for m in maps]), np.hstack([m.mask for m in maps]))

    if isinstance(first, NormalMap):
        return NormalMap(np.hstack([m.data for m in maps]), np.hstack([m.mask for m in maps]))

    return CurvatureMap(np.hstack([m.k1 for m in maps]), np.hstack([m.k2 for m in maps]), np.hstack([m.mask for m in maps]))


def predict_maps(net, samples, batch_size=16):
    " fine-scale predictions as geometry maps (curvature still scaled) "

    preds = dict((t, []) for t in net.heads)

    for start in range(0, len(samples), batch_size):
        batch = samples[start:start + batch_size]
        out = net.forward(to_batch([s.rgb for s in batch]))

        for task in net.heads:
            for p in out[task]['fine']:
                if task == 'depth':
                    preds[task].append(DepthMap(np.exp(np.clip(p[0], -20.0, 20.0))))

                elif task == 'normals':
                    preds[task].append(NormalMap.normalized(p.transpose(1, 2, 0)))

                else:
                    preds[task].append(CurvatureMap.from_pair(p[0], p[1]))

    return preds


def evaluate(net, samples, tasks=None):
    """ held-out metric tables, {task: metrics dict}

    Fine predictions are brought to the target resolution first, and
    curvature is compared unscaled (m^-1). """

    if not samples:
        raise CurvkitException('No samples to evaluate')

    tasks = tasks or net.config.task_set
    preds = predict_maps(net, samples)
    report = {}

    for task in tasks:
        pred_maps = []
        gt_maps = []

        for pred, sample in zip(preds[task], samples):
            gt = {'depth': sample.depth, 'normals': sample.normals, 'curvature': sample.unscaled_curvature()}[task]

            if task == 'curvature':
                pred = pred.scaled(1.0 / sample.curvature_scale)

            if pred.width != gt.width:
                pred = upsample_prediction(pred, float(gt.width) / pred.width)

            pred_maps.append(_at(pred, gt.height, gt.width))
            gt_maps.append(gt)

        if task == 'depth':
            report[task] = eval_depth(_mosaic(pred_maps), _mosaic(gt_maps)).as_dict()

        elif task == 'normals':
            report[task] = eval_normals(_mosaic(pred_maps), _mosaic(gt_maps)).as_dict()

        else:
            depth_mask = np.hstack([s.depth.mask for s in samples])
            report[task] = eval_curvature(_mosaic(pred_maps), _mosaic(gt_maps), depth_mask).as_dict()

    return report


def run_capacity_experiment(dataset, base_config, seeds=(1,), holdout=0.25, configs=CAPACITY_CONFIGS):
    """ single-task vs joint training at constant capacity

    Every configuration keeps all task stacks in the graph. A diverging
    configuration is recorded and skipped, the others still run. """

    train_set, test_set = split_dataset(dataset, holdout)

    if not test_set:
        raise CurvkitException('The capacity experiment needs a held-out split')

    report = {'holdout': len(test_set), 'train': len(train_set), 'runs': []}
    counts = set()

    for seed in seeds:
        for tasks in configs:
            config = base_config.replace(task_set=list(tasks), seed=seed, heads_always_present=True)
            net = build(config)
            counts.add(net.param_count())

            run = {'tasks': list(tasks), 'seed': seed, 'param_count': net.param_count()}

            try:
                net, history = train(train_set, config, net=net)

            except DivergenceError as e:
                log('%s (seed %s) diverged: %s' % ('+'.join(tasks), seed, e))
                run.update(status='diverged', error=str(e))

            else:
                run.update(status='ok', history=history, metrics=evaluate(net, test_set))

            report['runs'].append(run)

    report['param_counts_equal'] = len(counts) == 1
    report['comparison'] = _compare(report['runs'])

    return report


def _compare(runs):
    " joint vs single-task held-out numbers, reported not judged "

    def mean(tasks, task, key):
        values = [r['metrics'][task][key] for r in runs if r['status'] == 'ok' and tuple(r['tasks']) == tasks]
        return float(np.mean(values)) if values else None

    joint = TASKS
    out = {
        'depth_rms_lin': {'single': mean(('depth',), 'depth', 'rms_lin'), 'joint': mean(joint, 'depth', 'rms_lin')},
        'normals_mean_deg': {'single': mean(('normals',), 'normals', 'mean_deg'), 'joint': mean(joint, 'normals', 'mean_deg')},
        }

    for key, d in out.items():
        if d['single'] is not None and d['joint'] is not None:
            log('%s: single %.4f, joint %.4f' % (key, d['single'], d['joint']))

    return out


# model file: magic, u16 version, u32 config length, config json, u32 count,
# then per parameter: u16 name length, name, u8 ndim, u32 dims, float64 data

def save_model(net, path):
    config = json.dumps(net.config.as_dict(), sort_keys=True).encode('utf-8')
    params = net.parameters()

    chunks = [MODEL_MAGIC, struct.pack('<HI', MODEL_VERSION, len(config)), config, struct.pack('<I', len(params))]

    for name, buf in params:
        raw = name.encode('utf-8')
        chunks.append(struct.pack('<H', len(raw)) + raw)
        chunks.append(struct.pack('<B', buf.data.ndim) + struct.pack('<%sI' % buf.data.ndim, *buf.data.shape))
        chunks.append(buf.data.astype('<f8').tobytes())

    atomic_write(path, b''.join(chunks))


class _Reader(object):
    def __init__(self, raw, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise FormatError('%s: truncated model file' % self.path)

        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path):
    with open(path, 'rb') as f:
        reader = _Reader(f.read(), path)

    if reader.take(len(MODEL_MAGIC)) != MODEL_MAGIC:
        raise FormatError('%s: not a curvkit model file' % path)

    version, size = reader.unpack('<HI')

    if version != MODEL_VERSION:
        raise FormatError('%s: unsupported model version %s' % (path, version))

    try:
        config = NetworkConfig.from_dict(json.loads(reader.take(size).decode('utf-8')))

    except (ValueError, TypeError) as e:
        raise FormatError('%s: bad model config (%s)' % (path, e))

    net = build(config, zero=True)
    params = OrderedDict(net.parameters())
    count, = reader.unpack('<I')

    if count != len(params):
        raise FormatError('%s: %s parameter blobs, network has %s' % (path, count, len(params)))

    for _ in range(count):
        n, = reader.unpack('<H')
        name = reader.take(n).decode('utf-8')
        ndim, = reader.unpack('<B')
        shape = reader.unpack('<%sI' % ndim)

        if name not in params or params[name].data.shape != tuple(shape):
            raise FormatError('%s: unexpected parameter %s %s' % (path, name, shape))

        size = int(np.prod(shape)) * 8
        params[name].data[...] = np.frombuffer(reader.take(size), dtype='<f8').reshape(shape)

    return net
