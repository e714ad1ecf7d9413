import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ckdehr import tensor as T
from ckdehr.distill.losses import LossConfig, LossConfigError, bce_naive, bce_with_logits, total_loss
from gradcheck import max_rel_error, numeric_grad


def test_bce_examples():
    assert bce_with_logits(T.Tensor([0.0]), [1.0]).item() == pytest.approx(math.log(2), abs=1e-15)
    assert bce_with_logits(T.Tensor([0.0]), [0.5]).item() == pytest.approx(math.log(2), abs=1e-15)
    big = bce_with_logits(T.Tensor([1e4, -1e4]), [1.0, 0.0]).item()
    assert big == 0.0
    wrong = bce_with_logits(T.Tensor([1e4, -1e4]), [0.0, 1.0]).item()
    assert wrong == pytest.approx(1e4) and math.isfinite(wrong)


@pytest.mark.parametrize("seed", range(10))
def test_bce_matches_naive_formula(seed):
    r = np.random.default_rng(seed)
    x = r.uniform(-20, 20, size=(6, 25))
    t = r.random((6, 25))
    w = r.uniform(0.5, 2.0, size=25)
    assert abs(bce_with_logits(T.Tensor(x), t).item() - bce_naive(x, t)) < 1e-10
    assert abs(bce_with_logits(T.Tensor(x), t, w).item() - bce_naive(x, t, w)) < 1e-10


@given(st.floats(-1e4, 1e4), st.floats(0, 1))
def test_bce_finite_and_nonnegative(x, t):
    v = bce_with_logits(T.Tensor([x]), [t]).item()
    assert math.isfinite(v) and v >= -1e-12


@pytest.mark.parametrize("seed", range(10))
def test_bce_gradient_is_sigmoid_minus_target(seed):
    r = np.random.default_rng(seed)
    x = r.uniform(-8, 8, size=(3, 25))
    t = r.random((3, 25))
    xt = T.Tensor(x, requires_grad=True)
    with T.Tape() as tape:
        tape.backward(bce_with_logits(xt, t))
    closed = (1 / (1 + np.exp(-x)) - t) / x.size
    assert np.allclose(xt.grad, closed, atol=1e-15, rtol=1e-12)
    (num,) = numeric_grad(lambda a: bce_with_logits(T.Tensor(a), t).item(), [x])
    assert max_rel_error(num, xt.grad) < 1e-4


def test_bce_input_validation():
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        bce_with_logits(T.Tensor([0.0]), [1.5])
    with pytest.raises(T.ShapeError):
        bce_with_logits(T.Tensor([0.0, 1.0]), [1.0])
    with pytest.raises(ValueError, match="positive"):
        bce_with_logits(T.Tensor([0.0]), [1.0], weights=[0.0])


def test_total_loss_algebra():
    assert total_loss(0.8, 0.3, LossConfig(alpha=1.0)) == 0.8
    assert total_loss(0.8, 0.3, LossConfig(alpha=0.0)) == 0.3
    assert total_loss(0.5, 1.0, LossConfig(alpha=0.9)) == pytest.approx(0.55, abs=1e-15)
    # the unused term may be absent at the endpoints
    assert total_loss(0.8, None, LossConfig(alpha=1.0)) == 0.8
    h, s = T.Tensor(0.7), T.Tensor(0.2)
    assert total_loss(h, s, LossConfig(alpha=1.0)) is h


@given(st.floats(0, 1), st.floats(0, 50), st.floats(0, 50))
def test_total_loss_is_convex_combination(alpha, h, s):
    v = total_loss(h, s, LossConfig(alpha=alpha))
    assert min(h, s) - 1e-9 <= v <= max(h, s) + 1e-9


def test_loss_config_errors():
    with pytest.raises(LossConfigError, match="alpha"):
        LossConfig(alpha=1.2)
    with pytest.raises(LossConfigError):
        LossConfig(label_weights=np.ones(24))
    with pytest.raises(ValueError, match="non-negative"):
        total_loss(float("nan"), 0.1, LossConfig())
    assert LossConfig(alpha=0.9).beta == pytest.approx(0.1)
