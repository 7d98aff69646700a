import numpy as np
import pytest

from vgan import autodiff as ad
from vgan.errors import DimensionError, ValidityError
from vgan.optim import AdamState, adam_step


def test_first_steps_match_hand_computation():
    p = ad.Tensor(np.array([1.0, -2.0]), requires_grad=True)
    state = AdamState.for_params({"p": p}, learning_rate=0.1)
    grads = [np.array([0.5, -1.0]), np.array([0.2, 0.3])]
    m = v = np.zeros(2)
    expected = p.data.copy()
    for t, g in enumerate(grads, 1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        expected -= 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        adam_step({"p": p}, state, {"p": g})
    np.testing.assert_allclose(p.data, expected, rtol=1e-14)
    assert state.step == 2


def test_first_step_moves_by_learning_rate():
    # with bias correction the first update is lr * sign(g)
    p = ad.Tensor(np.array([0.0, 0.0, 0.0]), requires_grad=True)
    state = AdamState.for_params({"p": p}, learning_rate=0.01)
    adam_step({"p": p}, state, {"p": np.array([3.0, -1e-3, 50.0])})
    np.testing.assert_allclose(p.data, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_converges_on_quadratic():
    target = np.array([1.5, -0.5, 3.0])
    p = ad.Tensor(np.zeros(3), requires_grad=True)
    state = AdamState.for_params({"p": p}, learning_rate=0.05)
    for _ in range(2000):
        diff = ad.add(p, ad.Tensor(-target))
        ad.backward(ad.tsum(ad.mul(diff, diff)), {"p": p})
        adam_step({"p": p}, state)
    np.testing.assert_allclose(p.data, target, atol=1e-3)


def test_zero_learning_rate_keeps_parameters_but_updates_moments():
    p = ad.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    state = AdamState.for_params({"p": p}, learning_rate=0.0)
    adam_step({"p": p}, state, {"p": np.array([1.0, 1.0])})
    np.testing.assert_array_equal(p.data, [1.0, 2.0])
    assert np.all(state.m["p"] > 0)


def test_rejects_bad_gradients():
    p = ad.Tensor(np.zeros(2), requires_grad=True)
    state = AdamState.for_params({"p": p}, learning_rate=0.1)
    with pytest.raises(DimensionError):
        adam_step({"p": p}, state, {"p": np.zeros(3)})
    with pytest.raises(ValidityError):
        adam_step({"p": p}, state, {"p": np.array([np.nan, 0.0])})
    assert state.step == 0


def test_moment_overflow_rejected_without_side_effects():
    p = ad.Tensor(np.ones(2, dtype=np.float32), requires_grad=True)
    state = AdamState.for_params({"p": p}, learning_rate=0.1)
    with pytest.raises(ValidityError, match="overflow"):
        adam_step({"p": p}, state, {"p": np.array([1e30, 0.0], dtype=np.float32)})
    assert state.step == 0 and not np.any(state.v["p"])
    np.testing.assert_array_equal(p.data, [1, 1])
