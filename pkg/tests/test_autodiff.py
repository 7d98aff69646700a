import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import conv1x1_loop, conv_down_loop
from vgan import autodiff as ad
from vgan.errors import DegenerateError, DimensionError, GraphError, ValidityError


def leaf(a):
    return ad.Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


def test_conv1x1_matches_loop_oracle(rng):
    worst = 0.0
    for _ in range(100):
        h, w, cin, cout = rng.integers(1, 6, size=4)
        x, wt, b = rng.normal(size=(h, w, cin)), rng.normal(size=(cin, cout)), rng.normal(size=cout)
        got = ad.conv1x1(ad.Tensor(x), ad.Tensor(wt), ad.Tensor(b)).data
        worst = max(worst, np.abs(got - conv1x1_loop(x, wt, b)).max())
    assert worst < 1e-6


def test_conv_down_matches_loop_oracle(rng):
    worst = 0.0
    for _ in range(100):
        h, w = 2 * rng.integers(1, 5, size=2)
        cin, cout = rng.integers(1, 4, size=2)
        x, wt, b = rng.normal(size=(h, w, cin)), rng.normal(size=(4, 4, cin, cout)), rng.normal(size=cout)
        got = ad.conv_down(ad.Tensor(x), ad.Tensor(wt), ad.Tensor(b)).data
        assert got.shape == (h // 2, w // 2, cout)
        worst = max(worst, np.abs(got - conv_down_loop(x, wt, b)).max())
    assert worst < 1e-6


def _check(f, params, tol=1e-4):
    report = ad.grad_check(f, params)
    assert report.passed, str(report)


def test_grad_conv1x1(rng):
    x, w, b = leaf(rng.normal(size=(3, 4, 5))), leaf(rng.normal(size=(5, 2))), leaf(rng.normal(size=2))
    _check(lambda: ad.tsum(ad.tanh(ad.conv1x1(x, w, b))), {"x": x, "w": w, "b": b})


def test_grad_conv_down(rng):
    x, w, b = leaf(rng.normal(size=(4, 4, 2))), leaf(rng.normal(size=(4, 4, 2, 3))), leaf(rng.normal(size=3))
    _check(lambda: ad.tsum(ad.tanh(ad.conv_down(x, w, b))), {"x": x, "w": w, "b": b})


@pytest.mark.parametrize("norm", [ad.instance_norm, ad.batch_norm])
def test_grad_norms(norm, rng):
    x = leaf(rng.normal(size=(4, 4, 3)))
    g, s = leaf(rng.normal(size=3)), leaf(rng.normal(size=3))
    probe = rng.normal(size=(4, 4, 3))
    _check(lambda: ad.tsum(ad.mul(norm(x, g, s), ad.Tensor(probe))), {"x": x, "g": g, "s": s})


@pytest.mark.parametrize("kind", ["tanh", "relu", "leaky_relu"])
def test_grad_activations(kind, rng):
    # keep away from the kink so central differences are valid
    v = rng.normal(size=(3, 3, 2))
    v[np.abs(v) < 0.05] = 0.3
    x = leaf(v)
    probe = rng.normal(size=v.shape)
    _check(lambda: ad.tsum(ad.mul(ad.activation(x, kind), ad.Tensor(probe))), {"x": x})


@pytest.mark.parametrize("target", [0, 1])
def test_grad_bce(target, rng):
    x = leaf(rng.normal(size=7) * 3)
    _check(lambda: ad.bce_logits(x, target), {"x": x})


def test_grad_l1(rng):
    a, b = leaf(rng.normal(size=(3, 3))), leaf(rng.normal(size=(3, 3)))
    _check(lambda: ad.l1_loss(a, b), {"a": a, "b": b})


def test_bce_matches_two_class_softmax(rng):
    logits = rng.normal(size=50) * 4
    for target in (0, 1):
        stacked = np.stack([np.zeros_like(logits), logits], axis=1)  # class 1 has logit l
        logp = stacked - np.log(np.exp(stacked).sum(axis=1, keepdims=True))
        expected = -logp[:, target].mean()
        got = ad.bce_logits(ad.Tensor(logits), target).item()
        assert got == pytest.approx(expected, rel=1e-12)


def test_bce_extreme_logits_stay_finite():
    x = leaf([1e4, -1e4, 0.0])
    loss = ad.bce_logits(x, 1)
    ad.backward(loss, {"x": x})
    assert np.isfinite(loss.item()) and np.all(np.isfinite(x.grad))
    assert loss.item() == pytest.approx((1e4 + np.log(2)) / 3)


def test_relu_derivative_at_zero_is_one():
    x = leaf([0.0, -1.0, 2.0])
    ad.backward(ad.tsum(ad.relu(x)), {"x": x})
    np.testing.assert_array_equal(x.grad, [1.0, 0.0, 1.0])


def test_leaky_relu_derivative_at_zero_is_slope():
    x = leaf([0.0, -1.0, 2.0])
    ad.backward(ad.tsum(ad.leaky_relu(x, 0.2)), {"x": x})
    np.testing.assert_allclose(x.grad, [0.2, 0.2, 1.0])


def test_leaky_relu_slope():
    x = leaf([-2.0, 3.0])
    y = ad.leaky_relu(x, 0.2)
    np.testing.assert_allclose(y.data, [-0.4, 3.0])


def test_instance_norm_on_single_pixel_is_degenerate():
    x = leaf(np.ones((1, 1, 2)))
    with pytest.raises(DegenerateError):
        ad.instance_norm(x, leaf([1.0, 1.0]), leaf([0.0, 0.0]))


def test_backward_twice_is_an_error(rng):
    x = leaf(rng.normal(size=3))
    loss = ad.tsum(ad.tanh(x))
    ad.backward(loss, {"x": x})
    with pytest.raises(GraphError):
        ad.backward(loss, {"x": x})


def test_backward_needs_scalar(rng):
    x = leaf(rng.normal(size=3))
    with pytest.raises(GraphError):
        ad.backward(ad.tanh(x), {"x": x})


def test_non_finite_input_rejected():
    with pytest.raises(ValidityError):
        ad.conv1x1(ad.Tensor(np.full((1, 1, 2), np.nan)), ad.Tensor(np.ones((2, 1))), ad.Tensor([0.0]))


def test_shape_mismatch_rejected(rng):
    with pytest.raises(DimensionError):
        ad.conv1x1(ad.Tensor(rng.normal(size=(2, 2, 3))), ad.Tensor(rng.normal(size=(4, 1))), ad.Tensor([0.0]))


def test_detach_blocks_gradient(rng):
    x = leaf(rng.normal(size=4))
    loss = ad.tsum(ad.mul(x, x.detach()))
    ad.backward(loss, {"x": x})
    np.testing.assert_allclose(x.grad, x.data)  # only one factor contributes


def test_grad_accumulates_over_shared_use(rng):
    x = leaf(rng.normal(size=4))
    ad.backward(ad.tsum(ad.add(ad.tanh(x), ad.tanh(x))), {"x": x})
    np.testing.assert_allclose(x.grad, 2 * (1 - np.tanh(x.data) ** 2))


def test_grad_check_reports_a_wrong_gradient(rng):
    x = leaf(rng.normal(size=3))

    def wrong():
        y = ad.tanh(x)
        return ad.tsum(ad.Tensor._result(y.data, (y,), lambda g: (2 * g * np.ones_like(y.data),), "bad"))

    assert not ad.grad_check(wrong, {"x": x}).passed


small = arrays(np.float64, st.tuples(st.integers(2, 4), st.integers(2, 4), st.integers(1, 3)),
               elements=st.floats(-10, 10))


@settings(max_examples=40, deadline=None)
@given(small)
def test_instance_norm_standardises(x):
    c = x.shape[2]
    if np.any(x.reshape(-1, c).std(axis=0) < 1e-3):
        return
    y = ad.instance_norm(ad.Tensor(x), ad.Tensor(np.ones(c)), ad.Tensor(np.zeros(c)), eps=0.0).data
    np.testing.assert_allclose(y.reshape(-1, c).mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(y.reshape(-1, c).std(axis=0), 1, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(small, small)
def test_l1_is_symmetric_and_nonnegative(a, b):
    if a.shape != b.shape:
        return
    ab = ad.l1_loss(ad.Tensor(a), ad.Tensor(b)).item()
    assert ab >= 0
    assert ab == ad.l1_loss(ad.Tensor(b), ad.Tensor(a)).item()


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-50, 50)))
def test_bce_labels_sum_to_softplus_identity(logits):
    # softplus(l) + softplus(-l) = |l| + 2 log(1 + exp(-|l|))
    t = ad.Tensor(logits)
    total = ad.bce_logits(t, 0).item() + ad.bce_logits(t, 1).item()
    expected = np.mean(np.abs(logits) + 2 * np.log1p(np.exp(-np.abs(logits))))
    assert total == pytest.approx(expected, rel=1e-9, abs=1e-12)
