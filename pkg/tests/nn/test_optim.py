import numpy as np
import pytest

from app.errors import DivergenceError
from app.nn.optim import Adam, AdamState, adam_step
from app.nn.tensor import Parameter


def test_first_step_moves_by_learning_rate(rng):
    p = Parameter(rng.normal(size=5), name="w")
    start = p.values.copy()
    p.grad = rng.normal(size=5)
    adam_step([p], AdamState(lr=1e-3))
    np.testing.assert_allclose(np.abs(p.values - start), 1e-3, rtol=1e-4)
    assert np.all(np.sign(start - p.values) == np.sign(p.grad))


def test_zero_gradient_leaves_parameters(rng):
    p = Parameter(rng.normal(size=3), name="w")
    start = p.values.copy()
    p.grad = np.zeros(3)
    adam_step([p], AdamState())
    np.testing.assert_array_equal(p.values, start)


def test_parameters_without_gradient_are_skipped():
    p = Parameter(np.ones(2), name="w")
    state = AdamState()
    adam_step([p], state)
    assert state.step == 1 and "w" not in state.m


def test_non_finite_gradient_raises():
    p = Parameter(np.ones(2), name="w")
    p.grad = np.array([1.0, np.nan])
    with pytest.raises(DivergenceError):
        adam_step([p], AdamState())
    np.testing.assert_array_equal(p.values, [1.0, 1.0])


def test_adam_minimizes_quadratic():
    p = Parameter(np.array([3.0, -2.0]), name="w")
    opt = Adam([p], lr=0.05, betas=(0.5, 0.999))
    for _ in range(500):
        opt.zero_grad()
        p.grad = 2.0 * p.values
        opt.step()
    assert np.all(np.abs(p.values) < 0.05)
    assert opt.state.step == 500
