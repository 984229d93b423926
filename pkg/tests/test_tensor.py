import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medpipe.errors import GraphError, LabelOutOfRange, ShapeError
from medpipe.modelgraph import MAE, DiceLoss, FocalLoss
from medpipe.tensor import OP_KINDS, AdamW, Graph, OptimizerState, Tensor, adamw_step, backward, forward_op, ops

from oracles import gradcheck, op_cases, scalar_adamw

CASES = sorted(op_cases(np.random.default_rng(0)))


@pytest.mark.parametrize("name", CASES)
def test_gradcheck_ops(name):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        op, arrays, const = op_cases(rng)[name]
        assert gradcheck(op, arrays, rng, const) < 1e-4, (name, seed)


def test_every_dispatchable_op_has_a_gradcheck():
    differentiable = set(OP_KINDS)
    assert differentiable <= set(CASES)


@pytest.mark.parametrize("loss", [MAE(), DiceLoss(smooth=1.0), FocalLoss(gamma=2.0, alpha=[0.3, 0.7])])
def test_gradcheck_losses(loss):
    for seed in range(3):
        rng = np.random.default_rng(seed)
        logits = rng.standard_normal((2, 2, 3, 3))
        labels = rng.integers(0, 2, size=(2, 1, 3, 3)).astype(np.float64)
        if isinstance(loss, MAE):
            fn = lambda x: loss(x, Tensor(labels))  # noqa: E731
        else:
            fn = lambda x: loss(ops.softmax_channel(x), Tensor(labels))  # noqa: E731
        assert gradcheck(fn, [logits], rng) < 1e-4


def test_unreached_parameter_gets_zero_gradient():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones(2), requires_grad=True)
    with Graph() as g:
        loss = ops.sum(ops.mul_scalar(a, 3.0))
    grads = backward(g, loss, [a, b])
    np.testing.assert_array_equal(grads[a], [3.0, 3.0, 3.0])
    np.testing.assert_array_equal(grads[b], [0.0, 0.0])


def test_shared_input_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    with Graph() as g:
        loss = ops.sum(ops.mul(x, x))
    assert backward(g, loss, [x])[x][0] == pytest.approx(4.0)


def test_nothing_recorded_without_graph():
    x = Tensor(np.ones(2), requires_grad=True)
    y = ops.exp(x)
    assert not y.requires_grad


def test_backward_needs_scalar():
    x = Tensor(np.ones(2), requires_grad=True)
    with Graph() as g:
        y = ops.exp(x)
    with pytest.raises(GraphError):
        backward(g, y, [x])


def test_shape_errors():
    with pytest.raises(ShapeError):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))
    with pytest.raises(ShapeError):
        ops.conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((3, 1, 3, 3))))
    with pytest.raises(LabelOutOfRange):
        ops.gather_log_prob(Tensor(np.full((1, 2, 2), 0.5)), np.array([[0, 2]]))


def test_forward_op_dispatch():
    out = forward_op("relu", [np.array([-1.0, 2.0])])
    np.testing.assert_array_equal(out.data, [0.0, 2.0])
    with pytest.raises(ValueError):
        forward_op("nope", [])


def test_conv2d_matches_direct_sum():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 5, 5))
    w = rng.standard_normal((1, 2, 3, 3))
    out = ops.conv2d(Tensor(x), Tensor(w), None, 1, 0).data
    ref = np.zeros((1, 1, 3, 3))
    for i in range(3):
        for j in range(3):
            ref[0, 0, i, j] = np.sum(x[0, :, i:i + 3, j:j + 3] * w[0])
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_adamw_matches_scalar_reference():
    lr, b1, b2, eps, wd = 0.05, 0.9, 0.999, 1e-8, 0.01
    grad_fn = lambda t: 2.0 * (t - 3.0)  # noqa: E731 - gradient of (t - 3)^2
    expected = scalar_adamw(0.5, grad_fn, 100, lr, b1, b2, eps, wd)
    state = OptimizerState(lr=lr, betas=(b1, b2), eps=eps, weight_decay=wd)
    params = {"t": np.array(0.5)}
    for k in range(100):
        params, state = adamw_step(params, {"t": np.array(grad_fn(float(params["t"])))}, state)
        assert abs(float(params["t"]) - expected[k]) <= 1e-12


def test_adamw_rejects_bad_hyperparameters():
    with pytest.raises(ValueError):
        AdamW(lr=0)
    with pytest.raises(ValueError):
        AdamW(betas=[0.9, 1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6))
def test_softmax_rows_sum_to_one(values):
    x = Tensor(np.array(values, dtype=np.float64).reshape(1, -1, 1))
    s = ops.softmax_channel(x).data
    assert abs(float(s.sum()) - 1.0) < 1e-12
    assert np.all(s >= 0)
