"""Adam: fixed points, a hand-scripted step oracle, and failure diagnostics."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from capsroute.errors import TrainingAborted
from capsroute.optim import Adam
from capsroute.tensor import Tensor


def param(values) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


def test_zero_gradient_leaves_parameters_unchanged():
    p = param([1.0, -2.0, 3.0])
    opt = Adam([("p", p)], lr=0.1)
    for _ in range(3):
        p.grad = np.zeros(3)
        opt.step()
    assert_array_equal(p.data, [1.0, -2.0, 3.0])


def test_constant_gradient_step_approaches_lr_sign():
    # With a constant gradient the bias-corrected moments converge to (g, g²),
    # so the step tends to lr * g / |g| = lr * sign(g).
    p = param([0.0, 0.0])
    g = np.array([0.5, -2.0])
    opt = Adam([("p", p)], lr=1e-3)
    prev = p.data.copy()
    for t in range(200):
        p.grad = g.copy()
        opt.step()
        step = p.data - prev
        prev = p.data.copy()
    assert_allclose(step, -1e-3 * np.sign(g), rtol=1e-4)


def test_five_steps_match_scripted_oracle():
    # Quadratic bowl f(x) = 0.5 * sum(x²), gradient x; scripted Adam with
    # bias correction written out longhand.
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    x = np.array([1.0, -3.0, 0.5])
    m = np.zeros(3)
    v = np.zeros(3)
    expected = x.copy()
    for t in range(1, 6):
        g = expected.copy()
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        expected = expected - lr * m_hat / (np.sqrt(v_hat) + eps)

    p = param([1.0, -3.0, 0.5])
    opt = Adam([("p", p)], lr=lr, beta1=b1, beta2=b2, eps=eps)
    for _ in range(5):
        p.grad = p.data.copy()
        opt.step()
    assert_allclose(p.data, expected, rtol=0, atol=1e-12)


def test_adam_descends_a_quadratic():
    p = param([4.0, -4.0])
    opt = Adam([("p", p)], lr=0.05)
    for _ in range(500):
        p.grad = p.data.copy()
        opt.step()
    assert np.abs(p.data).max() < 0.05


def test_non_finite_gradient_aborts_naming_parameter():
    p = param([1.0])
    q = param([1.0])
    opt = Adam([("stem.weight", p), ("head.bias", q)], lr=0.1)
    p.grad = np.array([0.0])
    q.grad = np.array([np.nan])
    with pytest.raises(TrainingAborted) as err:
        opt.step()
    assert "head.bias" in str(err.value)


def test_zero_grad_clears_accumulated_gradients():
    p = param([2.0])
    opt = Adam([("p", p)], lr=0.1)
    (p * p).sum().backward()
    assert p.grad[0] != 0.0
    opt.zero_grad()
    assert_array_equal(p.grad, [0.0])
