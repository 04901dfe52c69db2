import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mgvae.autodiff as ad
from mgvae.autodiff import (GraphError, ShapeError, Tensor, backward, constant,
                            grad_check, param)


def test_matmul_identity():
    a = constant([[1.0, 2.0], [3.0, 4.0]])
    eye = constant(np.eye(2))
    out = ad.matmul(a, eye)
    np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])


def test_tanh_odd_at_zero():
    x = constant(np.zeros((3, 2)))
    np.testing.assert_array_equal(ad.tanh(x).data, np.zeros((3, 2)))


def test_sum_of_mean():
    x = constant([[2.0], [4.0], [6.0]])
    assert float(ad.sum_all(ad.mean_all(x)).data) == 4.0


def test_shape_error_names_op_and_shapes():
    a = constant(np.zeros((2, 3)))
    b = constant(np.zeros((2, 3)))
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(a, b)
    with pytest.raises(ShapeError, match=r"add.*\(2, 3\)"):
        ad.add(a, constant(np.zeros((3, 2))))


def test_backward_square_sum():
    w = param([1.0, 2.0])
    loss = ad.sum_all(ad.mul(w, w))
    backward(loss)
    np.testing.assert_allclose(w.grad, [2.0, 4.0])


def test_backward_sigmoid_at_zero():
    x = param(np.zeros(()))
    loss = ad.sigmoid(x)
    backward(loss)
    np.testing.assert_allclose(x.grad, 0.25)


def test_backward_requires_scalar():
    w = param([1.0, 2.0])
    with pytest.raises(GraphError):
        backward(ad.mul(w, w))


def test_backward_two_layer_network_matches_finite_differences(rng):
    w1 = param(rng.uniform(-1, 1, (4, 3)), "w1")
    b1 = param(rng.uniform(-1, 1, 4), "b1")
    w2 = param(rng.uniform(-1, 1, (2, 4)), "w2")
    x = constant(rng.uniform(-1, 1, (5, 3)))

    def build():
        h = ad.tanh(ad.add(ad.matmul(x, w1, transpose_b=True), b1))
        out = ad.sigmoid(ad.matmul(h, w2, transpose_b=True))
        return ad.mean_all(ad.square(out))

    result = grad_check(build, {"w1": w1, "b1": b1, "w2": w2}, h=1e-5, tol=1e-4)
    assert result.ok, str(result)


def test_grad_check_catches_corrupted_gradient(rng):
    w = param(rng.uniform(-1, 1, (3,)), "w")

    def build():
        sq = ad.square(w)
        # corrupt the analytic gradient path by a constant offset
        original = sq._backward
        sq._backward = lambda g: original(g + 0.1)
        return ad.sum_all(sq)

    result = grad_check(build, {"w": w}, h=1e-5, tol=1e-4)
    assert not result.ok
    assert result.errors["w"] > 0.01


def test_backward_linearity(rng):
    w = param(rng.uniform(-1, 1, (4,)), "w")

    def loss_a():
        return ad.sum_all(ad.square(w))

    def loss_b():
        return ad.mean_all(ad.exp(w))

    w.zero_grad()
    backward(ad.add(loss_a(), loss_b()))
    combined = w.grad.copy()

    w.zero_grad()
    backward(loss_a())
    ga = w.grad.copy()
    w.zero_grad()
    backward(loss_b())
    gb = w.grad.copy()
    np.testing.assert_allclose(combined, ga + gb, rtol=0, atol=1e-15)


def test_forward_deterministic(rng):
    x = rng.uniform(-1, 1, (6, 4))
    w = rng.uniform(-1, 1, (3, 4))

    def run():
        return ad.tanh(ad.matmul(constant(x), constant(w), transpose_b=True)).data

    a, b = run(), run()
    assert a.tobytes() == b.tobytes()


def test_gradient_accumulates_across_backward_calls():
    w = param([2.0])
    backward(ad.sum_all(ad.square(w)))
    backward(ad.sum_all(ad.square(w)))
    np.testing.assert_allclose(w.grad, [8.0])
    w.zero_grad()
    assert w.grad is None


def test_add_row_broadcast_gradients(rng):
    x = param(rng.uniform(-1, 1, (5, 3)), "x")
    v = param(rng.uniform(-1, 1, 3), "v")
    r = param(rng.uniform(-1, 1, (1, 3)), "r")

    def build():
        return ad.mean_all(ad.square(ad.add(ad.add(x, v), r)))

    assert grad_check(build, {"x": x, "v": v, "r": r}).ok


def test_concat_slice_broadcast_ops(rng):
    a = param(rng.uniform(-1, 1, (2, 3)), "a")
    b = param(rng.uniform(-1, 1, (4, 3)), "b")

    def build():
        joined = ad.concat([a, b], axis=0)
        top = ad.rows(joined, 0, 3)
        left = ad.cols(top, 0, 2)
        spread = ad.broadcast_rows(ad.rows(left, 0, 1), 6)
        return ad.mean_all(ad.square(ad.add(spread, ad.affine(ad.cols(joined, 0, 2), 0.5, -0.1))))

    assert grad_check(build, {"a": a, "b": b}).ok


@pytest.mark.parametrize("op", [ad.tanh, ad.sigmoid, ad.exp, ad.square])
def test_unary_op_gradients(op, rng):
    x = param(rng.uniform(-1, 1, (3, 2)), "x")
    assert grad_check(lambda: ad.sum_all(op(x)), {"x": x}).ok


def test_log_gradient(rng):
    x = param(rng.uniform(0.2, 2.0, (3, 2)), "x")
    assert grad_check(lambda: ad.sum_all(ad.log(x)), {"x": x}).ok


def test_stop_gradient_blocks_flow():
    w = param([3.0])
    loss = ad.sum_all(ad.mul(ad.stop_gradient(w), w))
    backward(loss)
    np.testing.assert_allclose(w.grad, [3.0])  # only the live branch contributes


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=6),
       st.lists(st.floats(-1, 1), min_size=1, max_size=6))
def test_property_sub_mul_grads_match_fd(xs, ys):
    n = min(len(xs), len(ys))
    a = param(np.array(xs[:n]), "a")
    b = param(np.array(ys[:n]), "b")

    def build():
        return ad.mean_all(ad.square(ad.sub(ad.mul(a, b), ad.affine(a, 0.3, 0.1))))

    assert grad_check(build, {"a": a, "b": b}).ok


def test_float32_ops_preserve_dtype():
    x = constant(np.ones((2, 2), dtype=np.float32))
    y = ad.tanh(ad.add(x, x))
    assert y.data.dtype == np.float32
