import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swinlesion.gradcheck import finite_diff_check
from swinlesion.losses import FocalLossParams, alpha_from_distribution, cross_entropy, focal_loss
from swinlesion.tensor import Tensor


def test_uniform_logits_cross_entropy_is_log_k():
    assert cross_entropy(Tensor(np.zeros((1, 8))), [3]).item() == pytest.approx(math.log(8), abs=1e-15)


def test_confident_logits_drive_losses_to_zero():
    logits = Tensor([[200.0, 0.0, 0.0]])
    assert cross_entropy(logits, [0]).item() < 1e-80
    assert focal_loss(logits, [0]).item() < 1e-80


def test_focal_half_probability_value():
    # two equal logits put p_t at exactly 0.5
    loss = focal_loss(Tensor([[0.0, 0.0]]), [0], FocalLossParams(alpha=np.ones(2), gamma=2.0))
    assert abs(loss.item() - 0.25 * math.log(2)) < 1e-9


def test_focal_gamma_zero_matches_cross_entropy():
    rng = np.random.default_rng(0)
    params = FocalLossParams(alpha=np.ones(6), gamma=0.0)
    for _ in range(1000):
        logits = Tensor(rng.normal(0, 4, size=(1, 6)))
        y = rng.integers(0, 6, size=1)
        assert abs(focal_loss(logits, y, params).item() - cross_entropy(logits, y).item()) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(-6, 6), st.floats(0.0, 4.0), st.floats(0.1, 3.0))
def test_focal_decreases_in_gamma(margin, gamma, step):
    logits = Tensor([[margin, 0.0, 0.0]])
    lo = focal_loss(logits, [0], FocalLossParams(gamma=gamma)).item()
    hi = focal_loss(logits, [0], FocalLossParams(gamma=gamma + step)).item()
    assert hi < lo


def test_alpha_weights_samples_by_true_class():
    logits = Tensor(np.zeros((1, 2)))
    alpha = np.array([1.0, 3.0])
    per_class = [focal_loss(logits, [k], FocalLossParams(alpha=alpha, gamma=2.0)).item() for k in (0, 1)]
    assert per_class[1] == pytest.approx(3 * per_class[0], rel=1e-15)


def test_extreme_logits_stay_finite():
    logits = Tensor([[1e4, -1e4]], requires_grad=True)
    loss = focal_loss(logits, [1])
    loss.backward()
    assert np.isfinite(loss.item()) and loss.item() == pytest.approx(-math.log(1e-12), rel=1e-12)
    assert np.isfinite(logits.grad).all()


def test_label_validation():
    with pytest.raises(ValueError):
        cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])
    with pytest.raises(ValueError):
        cross_entropy(Tensor(np.zeros((2, 3))), [0])
    with pytest.raises(ValueError):
        focal_loss(Tensor(np.zeros((1, 3))), [0], FocalLossParams(alpha=np.ones(2)))
    with pytest.raises(ValueError):
        FocalLossParams(gamma=-1.0)


@pytest.mark.parametrize("loss", ["ce", "focal"])
def test_loss_gradients_vs_fd(loss):
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(0, 2, size=(5, 4)), requires_grad=True)
    y = np.array([0, 1, 3, 3, 2])
    params = FocalLossParams(alpha=np.array([0.5, 1.0, 2.0, 1.5]), gamma=2.0)
    f = (lambda t: cross_entropy(t, y)) if loss == "ce" else (lambda t: focal_loss(t, y, params))
    r = finite_diff_check(f, x, tol=1e-5)
    assert r.passed, r.line()


def test_alpha_schemes():
    assert np.array_equal(alpha_from_distribution([5, 5, 5]), np.ones(3))
    a = alpha_from_distribution([12000, 300])
    assert a[1] / a[0] == pytest.approx(40.0, rel=1e-12)
    assert a.mean() == pytest.approx(1.0, rel=1e-15)
    assert np.array_equal(alpha_from_distribution([12000, 300], "uniform"), np.ones(2))
    with pytest.raises(ValueError):
        alpha_from_distribution([3, 0])
