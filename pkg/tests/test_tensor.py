import math

import numpy as np
import pytest

from sitswin.cli.verify import OP_RTOL, op_cases
from sitswin.errors import (
    DegenerateError,
    DimensionError,
    GraphError,
    NumericalError,
    ParameterError,
    RangeError,
    UnsupportedError,
)
from sitswin.tensor import (
    Dropout,
    Graph,
    Linear,
    Module,
    Tensor,
    backward,
    conv3d,
    conv3d_transpose,
    cross_entropy,
    dropout,
    gelu,
    gradcheck,
    layer_norm,
    matmul,
    no_grad,
    precision,
    roll,
    set_check_finite,
    softmax_last,
)


def test_matmul_hand_example():
    out = matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5, 6], [7, 8]]))
    np.testing.assert_array_equal(out.numpy(), [[19, 22], [43, 50]])


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_softmax_last(float64):
    np.testing.assert_allclose(softmax_last(Tensor(np.zeros(4))).numpy(), [0.25] * 4)
    np.testing.assert_allclose(softmax_last(Tensor([0.0, math.log(2.0)])).numpy(), [1 / 3, 2 / 3], rtol=1e-12)
    rows = softmax_last(Tensor(np.random.default_rng(3).standard_normal((5, 7)) * 30)).numpy()
    np.testing.assert_allclose(rows.sum(axis=-1), 1.0, rtol=1e-12)


def test_softmax_is_shift_invariant(float64):
    x = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(softmax_last(Tensor(x)).numpy(), softmax_last(Tensor(x + 1000.0)).numpy(), rtol=1e-12)


def test_layer_norm_cases(float64):
    ones, zeros = Tensor(np.ones(4)), Tensor(np.zeros(4))
    np.testing.assert_allclose(layer_norm(Tensor(np.full((2, 4), 3.0)), ones, zeros).numpy(), 0.0)

    pair = layer_norm(Tensor([1.0, -1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
    np.testing.assert_allclose(pair.numpy(), [1.0, -1.0], rtol=1e-9)

    beta = np.array([0.5, -1.0, 2.0, 0.0])
    out = layer_norm(Tensor(np.random.default_rng(0).standard_normal((3, 4))), zeros, Tensor(beta))
    np.testing.assert_allclose(out.numpy(), np.broadcast_to(beta, (3, 4)))


def test_layer_norm_rejects_non_positive_eps():
    with pytest.raises(ParameterError):
        layer_norm(Tensor(np.ones((2, 4))), Tensor(np.ones(4)), Tensor(np.zeros(4)), eps=0.0)


def test_gelu_values(float64):
    out = gelu(Tensor([0.0, 1.0, 10.0])).numpy()
    assert out[0] == 0.0
    assert out[1] == pytest.approx(0.841345, abs=1e-6)
    assert abs(out[2] - 10.0) < 1e-6


def test_conv3d_identity_kernel(rng):
    x = rng.standard_normal((1, 2, 3, 4, 5)).astype(np.float32)
    w = np.zeros((2, 2, 1, 1, 1), dtype=np.float32)
    w[0, 0] = w[1, 1] = 1.0
    out = conv3d(Tensor(x), Tensor(w), Tensor(np.zeros(2)))
    np.testing.assert_array_equal(out.numpy(), x)


def test_conv3d_counts_with_ones_kernel():
    out = conv3d(Tensor(np.ones((1, 1, 4, 4, 4))), Tensor(np.ones((1, 1, 2, 2, 2))), stride=2)
    assert out.shape == (1, 1, 2, 2, 2)
    np.testing.assert_array_equal(out.numpy(), 8.0)


def test_conv3d_output_extents():
    x = Tensor(np.zeros((1, 1, 32, 48, 48)))
    assert conv3d(x, Tensor(np.zeros((3, 1, 2, 2, 2))), stride=2).shape == (1, 3, 16, 24, 24)
    assert conv3d(Tensor(np.zeros((1, 1, 4, 5, 6))), Tensor(np.zeros((1, 1, 3, 3, 3))), pad=1).shape == (1, 1, 4, 5, 6)


def test_conv3d_kernel_larger_than_input():
    with pytest.raises(DimensionError):
        conv3d(Tensor(np.zeros((1, 1, 2, 2, 2))), Tensor(np.zeros((1, 1, 3, 3, 3))))


def test_conv3d_transpose_shape_and_block():
    out = conv3d_transpose(Tensor(np.zeros((1, 1, 2, 3, 3))), Tensor(np.zeros((1, 4, 2, 2, 2))), stride=2)
    assert out.shape == (1, 4, 4, 6, 6)

    x = np.zeros((1, 1, 2, 3, 3))
    x[0, 0, 1, 2, 0] = 1.0
    out = conv3d_transpose(Tensor(x), Tensor(np.ones((1, 1, 2, 2, 2))), stride=2).numpy()[0, 0]
    expected = np.zeros((4, 6, 6))
    expected[2:4, 4:6, 0:2] = 1.0
    np.testing.assert_array_equal(out, expected)


def test_conv3d_transpose_is_adjoint_of_strided_conv(rng, float64):
    x = rng.standard_normal((2, 3, 2, 2, 3))
    w = rng.standard_normal((3, 4, 2, 2, 2))
    y = rng.standard_normal((2, 4, 4, 4, 6))
    up = conv3d_transpose(Tensor(x), Tensor(w), stride=2).numpy()
    down = conv3d(Tensor(y), Tensor(w), stride=2).numpy()
    assert np.sum(up * y) == pytest.approx(np.sum(x * down), rel=1e-10)


def test_conv3d_transpose_rejects_kernel_other_than_stride():
    with pytest.raises(UnsupportedError):
        conv3d_transpose(Tensor(np.zeros((1, 1, 2, 2, 2))), Tensor(np.zeros((1, 1, 3, 3, 3))), stride=2)


def test_cross_entropy_values(float64):
    uniform = cross_entropy(Tensor(np.zeros((1, 18, 2, 2))), np.zeros((1, 2, 2), dtype=np.uint8))
    assert uniform.item() == pytest.approx(math.log(18), rel=1e-12)

    logits = np.zeros((1, 2, 1, 1))
    logits[0, 1] = math.log(3.0)
    assert cross_entropy(Tensor(logits), np.ones((1, 1, 1), dtype=np.uint8)).item() == pytest.approx(0.28768, abs=1e-5)

    confident = np.zeros((1, 3, 1, 1))
    confident[0, 2] = 100.0
    assert cross_entropy(Tensor(confident), np.full((1, 1, 1), 2, dtype=np.uint8)).item() < 1e-6


def test_cross_entropy_skips_ignored_pixels(float64):
    logits = np.zeros((1, 2, 1, 2))
    logits[0, 1, 0, 0] = math.log(3.0)
    logits[0, 0, 0, 1] = 50.0
    labels = np.array([[[1, 255]]], dtype=np.uint8)
    assert cross_entropy(Tensor(logits), labels).item() == pytest.approx(-math.log(0.75), rel=1e-12)


def test_cross_entropy_errors():
    with pytest.raises(DegenerateError):
        cross_entropy(Tensor(np.zeros((1, 2, 2, 2))), np.full((1, 2, 2), 255, dtype=np.uint8))
    with pytest.raises(RangeError):
        cross_entropy(Tensor(np.zeros((1, 2, 1, 1))), np.full((1, 1, 1), 5, dtype=np.uint8))


def test_backward_of_sum_of_squares(rng, float64):
    w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    unrelated = Tensor(rng.standard_normal(3), requires_grad=True)
    backward((w * w).sum())
    np.testing.assert_allclose(w.grad, 2.0 * w.data)
    assert unrelated.grad is None


def test_backward_accumulates_shared_inputs(float64):
    w = Tensor([1.0, 2.0], requires_grad=True)
    backward((w * w + w * 3.0).sum())
    np.testing.assert_allclose(w.grad, [5.0, 7.0])


def test_second_backward_raises():
    w = Tensor(np.ones(3), requires_grad=True)
    loss = (w * w).sum()
    loss.backward()
    with pytest.raises(GraphError):
        loss.backward()


def test_backward_requires_scalar_that_depends_on_parameters():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(DimensionError):
        backward(w * w)
    with pytest.raises(GraphError):
        backward(Tensor(np.ones(3)).sum())


def test_no_grad_records_nothing():
    w = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        out = (w * w).sum()
    assert not out.requires_grad
    assert out.creator is None


def test_graph_trace_lists_ops_in_execution_order():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    out = matmul(a, a).sum()
    ops = [entry.op for entry in Graph.trace(out).entries]
    assert ops == ["matmul", "sum"]


def test_non_finite_output_from_finite_input():
    with pytest.raises(NumericalError):
        Tensor([1e30], dtype=np.float32) * Tensor([1e30], dtype=np.float32)


def test_finite_check_can_be_switched_off():
    set_check_finite(False)
    try:
        out = Tensor([1e30], dtype=np.float32) * Tensor([1e30], dtype=np.float32)
    finally:
        set_check_finite(True)
    assert np.isinf(out.numpy()).all()


def test_dropout_scales_survivors_and_masks_gradient():
    x = Tensor(np.ones(10000), requires_grad=True)
    out = dropout(x, 0.3, np.random.default_rng(5))
    values = out.numpy()
    assert set(np.unique(values).tolist()) <= {0.0, 1.0 / 0.7}
    assert abs((values == 0).mean() - 0.3) < 0.03
    backward(out.sum())
    np.testing.assert_array_equal(x.grad, values)
    assert dropout(x, 0.0, np.random.default_rng(5)) is x
    with pytest.raises(ParameterError):
        dropout(x, 1.0, np.random.default_rng(5))


def test_dropout_module_only_acts_in_training(rng):
    layer = Dropout(0.5, rng)
    x = Tensor(np.ones((4, 50)))
    with no_grad():
        assert (layer(x).numpy() == 0).any()
        layer.eval()
        assert layer(x) is x
        layer.train()
        assert Dropout(0.0, rng)(x) is x


def test_roll_wraps(float64):
    np.testing.assert_array_equal(roll(Tensor([0.0, 1.0, 2.0, 3.0]), (1,), (0,)).numpy(), [3.0, 0.0, 1.0, 2.0])


def test_precision_context_restores_dtype():
    with precision(np.float64):
        assert Tensor([1, 2]).dtype == np.float64
    assert Tensor([1, 2]).dtype == np.float32


def test_every_op_matches_finite_differences(float64):
    for name, fn, inputs in op_cases(np.random.default_rng(0)):
        result = gradcheck(fn, inputs, rtol=OP_RTOL)
        assert result.passed, f"{name}: relative error {result.max_error:.3e}"


class _Pair(Module):
    def __init__(self, rng):
        self.first = Linear(3, 4, rng)
        self.layers = [Linear(4, 2, rng)]


def test_module_parameter_names_and_state_dict(rng):
    model = _Pair(rng)
    names = [name for name, _ in model.named_parameters()]
    assert names == ["first.weight", "first.bias", "layers.0.weight", "layers.0.bias"]
    assert model.parameter_count() == 3 * 4 + 4 + 4 * 2 + 2

    state = model.state_dict()
    state["first.bias"] = np.ones(4, dtype=np.float64)
    model.load_state_dict(state)
    assert model.first.bias.dtype == np.float32
    np.testing.assert_array_equal(model.first.bias.data, 1.0)

    state["first.bias"] = np.ones(5)
    with pytest.raises(DimensionError, match="first.bias"):
        model.load_state_dict(state)
