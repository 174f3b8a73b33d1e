import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from replaybounds.model import (ModelSpec, Params, fd_gradient_check, forward, grad_batch, init_params, kink_margin,
                                loss_eval, losses, per_sample_grads, predict)
from replaybounds.numerics import RngStream


def _params(kind="linear", D=3, C=3, H=5, act="relu", seed=0):
    return init_params(ModelSpec(kind, D, C, H if kind == "mlp" else 0, act), RngStream(seed))


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec("cnn")
    with pytest.raises(ValueError):
        ModelSpec("mlp", 2, 2, 0)
    with pytest.raises(ValueError):
        ModelSpec(activation="gelu")
    with pytest.raises(ValueError):
        ModelSpec(surrogate_clip=0.0)
    assert ModelSpec("linear", 4, 3).num_params == 15
    assert ModelSpec("mlp", 4, 3, 5).num_params == 5 * 4 + 5 + 3 * 5 + 3


def test_params_shape_checked_and_bytes_roundtrip():
    p = _params("mlp")
    with pytest.raises(ValueError):
        Params(p.spec, np.zeros(3))
    back = Params.from_bytes(p.to_bytes())
    assert back.spec == p.spec
    np.testing.assert_array_equal(back.theta, p.theta)


def test_init_is_deterministic_and_bounded():
    a, b = _params("mlp", seed=4), _params("mlp", seed=4)
    np.testing.assert_array_equal(a.theta, b.theta)
    W1 = a.theta[:15]
    assert np.all(np.abs(W1) <= np.sqrt(6 / 3))


def test_forward_single_matches_batch():
    p = _params("mlp")
    X = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_allclose(forward(p, X[1]), forward(p, X)[1])
    with pytest.raises(ValueError):
        forward(p, np.zeros((2, 4)))


def test_predict_tie_goes_to_larger_index():
    p = Params(ModelSpec("linear", 2, 3), np.zeros(9))
    assert predict(p, np.ones((1, 2)))[0] == 2


def test_zero_one_and_surrogate_losses():
    theta = np.array([1.0, 0.0, -1.0, 0.0, 0.0, 0.0])  # class 0 row, class 1 row, biases
    p = Params(ModelSpec("linear", 2, 2, surrogate_clip=4.0), theta)
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    np.testing.assert_array_equal(losses(p, X, np.array([0, 0])), [0.0, 1.0])
    # cross-entropy of logits (1, -1) for class 0 is log(1 + e^-2)
    assert loss_eval(p, X[0], 0, "surrogate") == pytest.approx(np.log1p(np.exp(-2.0)) / 4.0)
    far = Params(p.spec, 10 * theta)
    assert losses(far, X[1:], np.array([0]), "surrogate")[0] == 1.0
    with pytest.raises(ValueError):
        losses(p, X, np.array([0, 0]), "hinge")


def test_clipped_points_have_zero_gradient():
    p = Params(ModelSpec("linear", 2, 2), 10 * np.array([1.0, 0.0, -1.0, 0.0, 0.0, 0.0]))
    np.testing.assert_array_equal(grad_batch(p, np.array([[-1.0, 0.0]]), np.array([0])), 0.0)


def test_grad_batch_is_mean_of_per_sample():
    p = _params("mlp", act="tanh")
    g = np.random.default_rng(1)
    X, y = g.normal(size=(6, 3)), g.integers(0, 3, 6)
    np.testing.assert_allclose(per_sample_grads(p, X, y).mean(0), grad_batch(p, X, y), atol=1e-14)
    with pytest.raises(ValueError):
        grad_batch(p, np.zeros((0, 3)), np.zeros(0, dtype=int))


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(["linear", "mlp"]), act=st.sampled_from(["relu", "tanh"]), seed=st.integers(0, 10 ** 6))
def test_gradient_matches_finite_differences(kind, act, seed):
    p = _params(kind, act=act, seed=seed)
    g = np.random.default_rng(seed)
    X, y = g.normal(size=(5, 3)), g.integers(0, 3, 5)
    if kink_margin(p, X, y) < 1e-2:
        return
    assert fd_gradient_check(p, X, y) <= 1e-4


def test_fd_check_detects_a_wrong_gradient(monkeypatch):
    import replaybounds.model as model
    p = _params("linear")
    X, y = np.random.default_rng(0).normal(size=(4, 3)), np.array([0, 1, 2, 0])
    monkeypatch.setattr(model, "grad_batch", lambda *a: model._surrogate_grad(p.spec, p.theta, X, y) / 4)  # sign flipped
    assert fd_gradient_check(p, X, y) > 1.0
    with pytest.raises(ValueError):
        fd_gradient_check(p, X, y, eps=1.0)
