import numpy as np
import pytest

from app.errors import ShapeError
from app.nn.layers import (
    concat,
    conv2d,
    conv2d_forward,
    leaky_relu,
    linear_map,
    mask_pyramid,
    max_pool2,
    mean_abs,
    upsample_nearest,
    where,
)
from app.nn.tensor import Parameter, Tensor
from app.tomo.projector import get_projector


def directional_check(fn, params, rng, eps=1e-6):
    '''
    Compare <grad, d> from backward() with a central difference along a random
    direction d. Returns the relative error.
    '''
    for p in params:
        p.zero_grad()
    fn().backward()
    directions = [rng.normal(size=p.shape) for p in params]
    analytic = sum(np.vdot(p.grad, d) for p, d in zip(params, directions))
    originals = [p.values.copy() for p in params]

    def shifted(sign):
        for p, d, v in zip(params, directions, originals):
            p.values = v + sign * eps * d
        return fn().item()

    numeric = (shifted(1.0) - shifted(-1.0)) / (2 * eps)
    for p, v in zip(params, originals):
        p.values = v
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)


def weighted_sum(t, weights):
    return mean_abs(t * Tensor(weights) + 10.0)


def test_conv2d_matches_direct_loop(rng):
    x = rng.normal(size=(1, 2, 5, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out, _ = conv2d_forward(x, w, b, stride=1, padding=1)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    expected = np.zeros((1, 3, 5, 6))
    for o in range(3):
        for i in range(5):
            for j in range(6):
                expected[0, o, i, j] = np.sum(xp[0, :, i:i + 3, j:j + 3] * w[o]) + b[o]
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_conv2d_stride2_output_size(rng):
    out, _ = conv2d_forward(rng.normal(size=(2, 1, 7, 8)), rng.normal(size=(4, 1, 3, 3)), np.zeros(4), 2, 1)
    assert out.shape == (2, 4, 4, 4)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_gradients(rng, stride):
    x = Parameter(rng.normal(size=(2, 2, 7, 6)))
    w = Parameter(rng.normal(size=(3, 2, 3, 3)))
    b = Parameter(rng.normal(size=3))
    out_shape = conv2d(x, w, b, stride, 1).shape
    weights = rng.normal(size=out_shape)
    err = directional_check(lambda: weighted_sum(conv2d(x, w, b, stride, 1), weights), [x, w, b], rng)
    assert err < 1e-4


def test_conv2d_channel_mismatch(rng):
    with pytest.raises(ShapeError):
        conv2d_forward(rng.normal(size=(1, 2, 4, 4)), rng.normal(size=(1, 3, 3, 3)), np.zeros(1))


def test_leaky_relu_values_and_gradient(rng):
    x = Parameter(np.array([-2.0, 0.5]))
    out = leaky_relu(x, 0.2)
    np.testing.assert_allclose(out.values, [-0.4, 0.5])
    out.backward(np.ones(2))
    np.testing.assert_allclose(x.grad, [0.2, 1.0])


def test_upsample_crop_and_gradient(rng):
    x = Parameter(rng.normal(size=(1, 2, 3, 3)))
    out = upsample_nearest(x, (5, 6))
    assert out.shape == (1, 2, 5, 6)
    assert out.values[0, 0, 4, 5] == x.values[0, 0, 2, 2]
    weights = rng.normal(size=out.shape)
    assert directional_check(lambda: weighted_sum(upsample_nearest(x, (5, 6)), weights), [x], rng) < 1e-4
    with pytest.raises(ShapeError):
        upsample_nearest(x, (7, 6))


def test_concat_gradient(rng):
    a = Parameter(rng.normal(size=(1, 1, 3, 3)))
    b = Parameter(rng.normal(size=(1, 2, 3, 3)))
    out = concat([a, b])
    assert out.shape == (1, 3, 3, 3)
    weights = rng.normal(size=out.shape)
    assert directional_check(lambda: weighted_sum(concat([a, b]), weights), [a, b], rng) < 1e-4


def test_max_pool_ceil_mode():
    mask = np.zeros((1, 1, 5, 5))
    mask[0, 0, 4, 4] = 1.0
    pooled = max_pool2(mask)
    assert pooled.shape == (1, 1, 3, 3)
    assert pooled[0, 0, 2, 2] == 1.0 and pooled.sum() == 1.0
    pyramid = mask_pyramid(mask, 3)
    assert [p.shape[2:] for p in pyramid] == [(5, 5), (3, 3), (2, 2)]
    assert pyramid[-1][0, 0, 1, 1] == 1.0


def test_where_routes_gradients(rng):
    a = Parameter(rng.normal(size=(2, 3)))
    b = Parameter(rng.normal(size=(2, 3)))
    cond = np.array([[True, False, True], [False, False, True]])
    out = where(cond, a, b)
    np.testing.assert_array_equal(out.values, np.where(cond, a.values, b.values))
    out.backward(np.ones((2, 3)))
    np.testing.assert_array_equal(a.grad, cond.astype(float))
    np.testing.assert_array_equal(b.grad, (~cond).astype(float))


def test_mean_abs_weighted(rng):
    x = Parameter(np.array([1.0, -3.0, 5.0, 0.0]))
    out = mean_abs(x, weight=np.array([1.0, 1.0, 0.0, 1.0]))
    assert out.item() == pytest.approx(4.0 / 3.0)
    out.backward()
    np.testing.assert_allclose(x.grad, [1 / 3, -1 / 3, 0.0, 0.0])
    with pytest.raises(ShapeError):
        mean_abs(x, weight=np.zeros(4))


def test_linear_map_uses_adjoint(geom16, rng):
    grid, geom = geom16
    proj = get_projector(geom)
    x = Parameter(rng.normal(size=(2, 1) + grid.shape))
    weights = rng.normal(size=(2, 1) + geom.shape)

    def fn():
        return weighted_sum(linear_map(x, proj.project, proj.backproject), weights)

    assert directional_check(fn, [x], rng) < 1e-4
    with pytest.raises(ShapeError):
        linear_map(Tensor(np.zeros((1, 2, 4, 4))), proj.project, proj.backproject)
