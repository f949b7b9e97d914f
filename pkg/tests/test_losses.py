import numpy as np
import pytest

from curvkit.losses import *
from curvkit.util import CurvkitException

EPS = 1e-6


def numeric_grad(fn, pred):
    grad = np.zeros_like(pred)

    for idx in np.ndindex(pred.shape):
        hi = pred.copy()
        lo = pred.copy()
        hi[idx] += EPS
        lo[idx] -= EPS
        grad[idx] = (fn(hi).value - fn(lo).value) / (2 * EPS)

    return grad

def random_mask(rng, shape):
    mask = rng.random(shape) > 0.3
    mask.flat[rng.choice(mask.size, 2, replace=False)] = True
    return mask

def assert_close(analytic, numeric):
    scale = max(np.linalg.norm(numeric), 1e-12)
    assert np.linalg.norm(analytic - numeric) / scale < 1e-6


def test_depth_gradient(rng):
    for _ in range(100):
        pred = rng.normal(0.0, 1.0, (5, 5))
        gt = rng.normal(0.0, 1.0, (5, 5))
        mask = random_mask(rng, (5, 5))

        fn = lambda p: depth_loss(p, gt, mask)
        assert_close(fn(pred).grad, numeric_grad(fn, pred))

def test_normal_gradient(rng):
    for _ in range(100):
        pred = rng.normal(0.0, 1.0, (5, 5, 3))
        gt = rng.normal(0.0, 1.0, (5, 5, 3))
        gt /= np.linalg.norm(gt, axis=2)[..., None]
        mask = random_mask(rng, (5, 5))

        fn = lambda p: normal_loss(p, gt, mask)
        assert_close(fn(pred).grad, numeric_grad(fn, pred))

@pytest.mark.parametrize('exponent', [-2.0, 2.0])
def test_curvature_gradient(rng, exponent):
    for _ in range(100):
        pred = rng.normal(0.0, 1.0, (5, 5, 2))
        gt = rng.normal(0.0, 1.0, (5, 5, 2))
        depth = rng.uniform(0.5, 5.0, (5, 5))
        mask = random_mask(rng, (5, 5))

        fn = lambda p: curvature_loss(p, gt, depth, mask, exponent)
        assert_close(fn(pred).grad, numeric_grad(fn, pred))

def test_masked_pixels_have_no_gradient(rng):
    mask = np.ones((4, 4), dtype=bool)
    mask[1, 2] = False

    assert depth_loss(rng.random((4, 4)), rng.random((4, 4)), mask).grad[1, 2] == 0.0
    assert not normal_loss(rng.random((4, 4, 3)), rng.random((4, 4, 3)), mask).grad[1, 2].any()
    assert not curvature_loss(rng.random((4, 4, 2)), rng.random((4, 4, 2)), np.ones((4, 4)), mask).grad[1, 2].any()

def test_minima(rng):
    mask = random_mask(rng, (6, 6))
    n = int(mask.sum())

    log_depth = rng.normal(0.0, 1.0, (6, 6))
    assert depth_loss(log_depth, log_depth, mask).value == pytest.approx(0.0, abs=1e-12)

    normals = rng.normal(0.0, 1.0, (6, 6, 3))
    normals /= np.linalg.norm(normals, axis=2)[..., None]
    result = normal_loss(normals, normals, mask)
    assert result.value == pytest.approx(-n)
    assert np.abs(result.grad).max() < 1e-12

    k = rng.normal(0.0, 1.0, (6, 6, 2))
    assert curvature_loss(k, k, np.ones((6, 6)), mask).value == 0.0

def test_depth_value():
    pred = np.array([[1.0, 2.0], [0.0, 0.5]])
    gt = np.zeros((2, 2))
    mask = np.array([[True, True], [False, True]])

    # d = (1, 2, 0.5), n = 3, pairs: (1, 2) along x, (2, 0.5) along y
    expected = 5.25 - 3.5 ** 2 / 18.0 + (1.0 + 2.25) / 3.0
    assert depth_loss(pred, gt, mask).value == pytest.approx(expected)

def test_normal_zero_prediction():
    gt = np.tile([0.0, 0.0, -1.0], (2, 2, 1))
    result = normal_loss(np.zeros((2, 2, 3)), gt, np.ones((2, 2), dtype=bool))

    assert result.value == pytest.approx(4.0)
    assert np.allclose(result.grad, -2 * gt)

def test_curvature_weights():
    pred = np.ones((1, 2, 2))
    gt = np.zeros((1, 2, 2))
    depth = np.array([[0.0, 1.0]])
    mask = np.ones((1, 2), dtype=bool)

    assert curvature_loss(pred, gt, depth, mask).value == pytest.approx(2.0 + 2.0 / 4.0)
    assert curvature_loss(pred, gt, depth, mask, exponent=2.0).value == pytest.approx(2.0 + 8.0)

def test_errors():
    with pytest.raises(CurvkitException):
        depth_loss(np.zeros((3, 3)), np.zeros((3, 3)), np.eye(3, dtype=bool) & False)

    with pytest.raises(CurvkitException):
        normal_loss(np.zeros((3, 3, 3)), np.zeros((3, 2, 3)), np.ones((3, 3), dtype=bool))

    with pytest.raises(CurvkitException):
        curvature_loss(np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), -np.ones((2, 2)), np.ones((2, 2), dtype=bool))

def test_registry():
    assert sorted(LOSSES) == ['curvature', 'depth', 'normals']

def test_depth_shift_invariant(rng):
    pred = rng.normal(0.0, 1.0, (5, 5))
    gt = rng.normal(0.0, 1.0, (5, 5))
    mask = random_mask(rng, (5, 5))

    shifted = depth_loss(pred + 0.7, gt + 0.7, mask)
    assert shifted.value == pytest.approx(depth_loss(pred, gt, mask).value)
