import numpy as np
import pytest

from artery import tensor as T
from artery.errors import NumericError, ShapeError

from gradcheck import GraphCase, max_relative_error


# ---------------------------------------------------------------------------
# elementwise and matmul examples
# ---------------------------------------------------------------------------


def test_matmul_basic():
    a = T.constant([[1.0, 2.0]])
    b = T.constant([[3.0], [4.0]])
    assert T.matmul(a, b).values.tolist() == [[11.0]]


def test_matmul_identity():
    x = T.constant(np.arange(9.0).reshape(3, 3))
    eye = T.constant(np.eye(3))
    assert np.array_equal(T.matmul(x, eye).values, x.values)


def test_matmul_shape_error_names_both_shapes():
    a = T.constant(np.ones((2, 3)))
    b = T.constant(np.ones((2, 3)))
    with pytest.raises(ShapeError) as exc:
        T.matmul(a, b)
    assert "(2, 3)" in str(exc.value)


def test_add_zero_identity():
    x = T.constant([[1.0, -2.0], [0.5, 3.0]])
    z = T.constant(np.zeros((2, 2)))
    assert np.array_equal(T.add(x, z).values, x.values)


def test_relu_values():
    x = T.constant([-1.0, 0.0, 2.0])
    assert T.relu(x).values.tolist() == [0.0, 0.0, 2.0]


def test_leaky_relu_negative_side():
    x = T.constant([-10.0])
    assert T.leaky_relu(x, 0.2).values.tolist() == [-2.0]


def test_scalar_broadcast():
    x = T.constant([[2.0, 4.0]])
    assert (x * 3.0).values.tolist() == [[6.0, 12.0]]
    assert (1.0 + x).values.tolist() == [[3.0, 5.0]]


def test_elementwise_shape_mismatch():
    a = T.constant(np.ones((2, 2)))
    b = T.constant(np.ones((3, 2)))
    with pytest.raises(ShapeError):
        T.add(a, b)


def test_div_by_exact_zero():
    a = T.constant([1.0])
    b = T.constant([0.0])
    with pytest.raises(NumericError):
        T.div(a, b)


def test_sqrt_negative_rejected():
    with pytest.raises(NumericError):
        T.sqrt(T.constant([-1.0]))


def test_non_finite_forward_rejected():
    big = T.constant([[800.0]])
    with pytest.raises(NumericError):
        T.exp(big)


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------


def test_softmax_uniform_on_equal_logits():
    for c in (0.0, 1.0, 1000.0, -1000.0):
        out = T.softmax(T.constant([[c, c]]), axis=1).values
        assert np.allclose(out, [[0.5, 0.5]], atol=1e-12)


def test_softmax_large_logits_stable():
    out = T.softmax(T.constant([[1000.0, 0.0]]), axis=1).values
    assert np.all(np.isfinite(out))
    assert out[0, 0] > 0.999999


def test_softmax_log_ratio():
    out = T.softmax(T.constant([[np.log(1.0), np.log(3.0)]]), axis=1).values
    assert np.allclose(out, [[0.25, 0.75]], atol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(7)
    x = T.constant(rng.normal(size=(5, 6)) * 10)
    out = T.softmax(x, axis=1).values
    assert np.allclose(out.sum(axis=1), 1.0, atol=1e-9)
    out0 = T.softmax(x, axis=0).values
    assert np.allclose(out0.sum(axis=0), 1.0, atol=1e-9)


def test_softmax_bad_axis():
    with pytest.raises(ShapeError):
        T.softmax(T.constant([[1.0]]), axis=2)


# ---------------------------------------------------------------------------
# mse
# ---------------------------------------------------------------------------


def test_mse_identity_zero():
    x = T.constant([1.0, 2.0, 3.0])
    assert T.mse_loss(x, x).item() == 0.0


def test_mse_values():
    assert T.mse_loss(T.constant([1.0, 2.0]), T.constant([0.0, 0.0])).item() == 2.5
    assert T.mse_loss(T.constant([5.0]), T.constant([2.0])).item() == 9.0


def test_mse_shape_mismatch():
    with pytest.raises(ShapeError):
        T.mse_loss(T.constant([1.0, 2.0]), T.constant([[1.0, 2.0]]))


# ---------------------------------------------------------------------------
# backward mechanics
# ---------------------------------------------------------------------------


def test_backward_of_sum_is_ones():
    x = T.parameter(np.arange(6.0).reshape(2, 3))
    T.backward(T.tsum(x))
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_backward_linear_mse():
    # loss(w) = mean((w*x - y)^2) with x=2, y=0 -> dloss/dw = 8w = 8.
    w = T.parameter([1.0])
    loss = T.mse_loss(w * T.constant([2.0]), T.constant([0.0]))
    T.backward(loss)
    assert np.allclose(w.grad, [8.0])


def test_backward_requires_scalar():
    x = T.parameter([1.0, 2.0])
    y = x * 2.0
    with pytest.raises(ShapeError):
        T.backward(y)


def test_second_backward_without_forward_raises():
    x = T.parameter([3.0])
    loss = T.tsum(x * x)
    T.backward(loss)
    with pytest.raises(NumericError):
        T.backward(loss)


def test_gradients_overwritten_per_backward():
    x = T.parameter([1.0])
    T.backward(T.tsum(x * 2.0))
    first = x.grad.copy()
    T.backward(T.tsum(x * 2.0))
    assert np.array_equal(x.grad, first)


def test_shared_input_accumulates_within_one_backward():
    x = T.parameter([2.0])
    # loss = x*x + 3x -> grad = 2x + 3 = 7
    loss = T.tsum(T.add(T.mul(x, x), x * 3.0))
    T.backward(loss)
    assert np.allclose(x.grad, [7.0])


def test_no_grad_blocks_recording():
    x = T.parameter([1.0])
    with T.no_grad():
        y = T.tsum(x * 2.0)
    assert y.requires_grad is False
    with pytest.raises(NumericError):
        T.backward(y)


def test_unreached_parameter_grad_untouched():
    x = T.parameter([1.0])
    z = T.parameter([5.0])
    T.backward(T.tsum(x * 4.0))
    assert z.grad is None
    assert np.allclose(x.grad, [4.0])


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------


def test_gather_scatter_roundtrip():
    x = T.constant(np.arange(8.0).reshape(4, 2))
    g = T.gather_rows(x, [3, 0, 3])
    assert g.values.tolist() == [[6.0, 7.0], [0.0, 1.0], [6.0, 7.0]]
    s = T.scatter_add_rows(g, [0, 0, 1], 2)
    assert s.values.tolist() == [[6.0, 8.0], [6.0, 7.0]]


def test_gather_rows_out_of_range():
    with pytest.raises(ShapeError):
        T.gather_rows(T.constant(np.ones((2, 2))), [2])


def test_concat_and_slice():
    a = T.constant([[1.0, 2.0]])
    b = T.constant([[3.0, 4.0]])
    c = T.concat([a, b], axis=1)
    assert c.values.tolist() == [[1.0, 2.0, 3.0, 4.0]]
    assert T.slice_cols(c, 1, 3).values.tolist() == [[2.0, 3.0]]


def test_add_rowvec_and_scale_rows():
    x = T.constant(np.ones((3, 2)))
    b = T.constant([[1.0, -1.0]])
    out = T.add_rowvec(x, b)
    assert out.values.tolist() == [[2.0, 0.0]] * 3
    s = T.constant([[1.0], [2.0], [0.0]])
    scaled = T.scale_rows(x, s)
    assert scaled.values.tolist() == [[1.0, 1.0], [2.0, 2.0], [0.0, 0.0]]


# ---------------------------------------------------------------------------
# finite-difference oracle (smaller sibling of the acceptance run)
# ---------------------------------------------------------------------------


def test_gradcheck_sample_graphs():
    worst = 0.0
    for seed in range(25):
        worst = max(worst, max_relative_error(GraphCase(seed)))
    assert worst < 1e-4


def test_gradcheck_gat_composite():
    # The exact gather/softmax/scatter pattern the attention layers use.
    rng = np.random.default_rng(11)
    h = T.parameter(rng.normal(size=(4, 3)))
    w = T.parameter(rng.normal(size=(3, 3)))
    a_src = T.parameter(rng.normal(size=(3, 1)))
    a_dst = T.parameter(rng.normal(size=(3, 1)))
    src = [0, 1, 2, 3, 0, 1, 2, 3]
    dst = [1, 2, 3, 0, 0, 1, 2, 3]

    def forward():
        z = T.matmul(h, w)
        logits = T.leaky_relu(
            T.add(
                T.gather_rows(T.matmul(z, a_src), src),
                T.gather_rows(T.matmul(z, a_dst), dst),
            )
        )
        shift = T.constant(np.zeros((len(src), 1)))
        e = T.exp(T.sub(logits, shift))
        denom = T.gather_rows(T.scatter_add_rows(e, dst, 4), dst)
        alpha = T.div(e, denom)
        out = T.scatter_add_rows(T.scale_rows(T.gather_rows(z, src), alpha), dst, 4)
        return T.tmean(T.relu(out))

    loss = forward()
    T.backward(loss)
    engine = [p.grad.copy() for p in (h, w, a_src, a_dst)]

    hstep = 1e-5
    with T.no_grad():
        for p, g in zip((h, w, a_src, a_dst), engine):
            fd = np.zeros_like(p.values)
            for idx in np.ndindex(*p.values.shape):
                orig = p.values[idx]
                p.values[idx] = orig + hstep
                fp = forward().item()
                p.values[idx] = orig - hstep
                fm = forward().item()
                p.values[idx] = orig
                fd[idx] = (fp - fm) / (2 * hstep)
            denom = np.maximum(np.maximum(np.abs(fd), np.abs(g)), 1e-6)
            assert np.max(np.abs(fd - g) / denom) < 1e-4
