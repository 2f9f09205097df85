import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from evsumm.model.optim import AdamState, adam_step, clip_gradients, global_norm
from oracles import adam_oracle


def test_clip_examples():
    g = np.array([3.0, 4.0])
    assert clip_gradients(g, 5.0) is g
    np.testing.assert_allclose(clip_gradients(np.array([6.0, 8.0]), 5.0), [3.0, 4.0], atol=1e-15)
    small = np.array([2.0, 0.0])
    np.testing.assert_array_equal(clip_gradients(small, 5.0), small)
    with pytest.raises(ValueError):
        clip_gradients(g, 0.0)


def test_clip_uses_global_norm_over_dict():
    grads = {"a": np.array([6.0]), "b": np.array([[8.0]])}
    out = clip_gradients(grads, 5.0)
    assert out["a"][0] == pytest.approx(3.0) and out["b"][0, 0] == pytest.approx(4.0)
    assert global_norm(out) == pytest.approx(5.0)


@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-1e3, 1e3)), st.floats(0.1, 100))
def test_clip_properties(g, tau):
    out = clip_gradients(g, tau)
    norm = np.linalg.norm(g)
    assert np.linalg.norm(out) <= tau + 1e-12 or norm <= tau
    if norm > tau:
        assert np.linalg.norm(out) == pytest.approx(tau, abs=1e-12)
        scale = tau / norm
        np.testing.assert_allclose(out, scale * g, rtol=1e-15, atol=0)
    else:
        np.testing.assert_array_equal(out, g)


def test_adam_zero_gradient_keeps_params():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState.zeros_like(params)
    adam_step(params, {"w": np.zeros(2)}, state, lr=0.1)
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])


def test_adam_first_step_is_sign_times_lr():
    params = {"w": np.zeros(3)}
    state = AdamState.zeros_like(params)
    adam_step(params, {"w": np.array([0.3, -5.0, 2e-3])}, state, lr=0.01)
    np.testing.assert_allclose(params["w"], [-0.01, 0.01, -0.01], rtol=1e-5)


def test_adam_matches_oracle_on_quadratic():
    A = np.diag([1.0, 10.0, 0.5])
    x0 = np.array([1.0, -2.0, 3.0])

    def grad(x):
        return A @ x

    expected = adam_oracle(x0, grad, steps=10, lr=0.05)
    params = {"x": x0.copy()}
    state = AdamState.zeros_like(params)
    for k in range(10):
        adam_step(params, {"x": grad(params["x"])}, state, lr=0.05)
        np.testing.assert_allclose(params["x"], expected[k + 1], atol=1e-14)
    assert state.step == 10


def test_adam_frozen_rows():
    params = {"emb": np.ones((3, 2)), "w": np.ones(2)}
    state = AdamState.zeros_like(params)
    grads = {"emb": np.ones((3, 2)), "w": np.ones(2)}
    adam_step(params, grads, state, lr=0.1, frozen={"emb": np.array([True, False, True])})
    np.testing.assert_array_equal(params["emb"][[0, 2]], 1.0)
    assert np.all(params["emb"][1] < 1.0) and np.all(params["w"] < 1.0)
