import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mgvae.autodiff as ad
from mgvae.autodiff import ShapeError, constant, grad_check
from mgvae.layers import (Dense, LSTMCell, Recurrent, SegmentSpec, broadcast_segments,
                          containment_map, segment_mean_pool)


def make_rng():
    return np.random.default_rng(7)


# ---------------------------------------------------------------------------
# dense


def test_dense_identity():
    layer = Dense(3, 3, "linear", rng=make_rng())
    layer.weight.data = np.eye(3)
    layer.bias.data = np.zeros(3)
    x = constant(np.arange(6.0).reshape(2, 3))
    np.testing.assert_array_equal(layer(x).data, x.data)


def test_dense_zero_weight_gives_bias_rows():
    layer = Dense(2, 4, "linear", rng=make_rng())
    layer.weight.data = np.zeros((2, 4))
    layer.bias.data = np.array([1.5, -2.0])
    out = layer(constant(np.ones((3, 4))))
    np.testing.assert_array_equal(out.data, np.tile([1.5, -2.0], (3, 1)))


def test_dense_one_by_one():
    layer = Dense(1, 1, "linear", rng=make_rng())
    layer.weight.data = np.array([[3.0]])
    layer.bias.data = np.array([1.0])
    assert layer(constant([[2.0]])).data[0, 0] == 7.0


def test_dense_width_mismatch():
    layer = Dense(2, 3, rng=make_rng())
    with pytest.raises(ShapeError):
        layer(constant(np.zeros((4, 5))))


def test_dense_grad_check():
    layer = Dense(3, 4, "tanh", rng=make_rng())
    x = constant(make_rng().uniform(-1, 1, (5, 4)))
    assert grad_check(lambda: ad.mean_all(ad.square(layer(x))),
                      {"w": layer.weight, "b": layer.bias}).ok


# ---------------------------------------------------------------------------
# recurrent


def test_recurrent_zero_weights_zero_output():
    layer = Recurrent(3, 4, "bidirectional", rng=make_rng())
    for t in layer.parameters().values():
        t.data = np.zeros_like(t.data)
    out = layer(constant(np.ones((5, 3))))
    np.testing.assert_array_equal(out.data, np.zeros((5, 8)))


def test_recurrent_single_frame_bidirectional_is_concat_of_single_steps():
    layer = Recurrent(2, 3, "bidirectional", rng=make_rng())
    x = constant(np.array([[0.3, -0.4]]))
    out = layer(x).data
    fwd_only = Recurrent(2, 3, "forward", rng=make_rng())
    fwd_only.fwd = layer.fwd
    bwd_only = Recurrent(2, 3, "backward", rng=make_rng())
    bwd_only.bwd = layer.bwd
    np.testing.assert_allclose(out, np.concatenate([fwd_only(x).data, bwd_only(x).data],
                                                   axis=1))


def hand_lstm(xs, wx, u, b):
    """Independent scalar unrolling of the gate recursion (H = 1)."""
    h = c = 0.0
    out = []
    for x in xs:
        a = [wx[k] * x + u[k] * h + b[k] for k in range(4)]
        i = 1 / (1 + math.exp(-a[0]))
        f = 1 / (1 + math.exp(-a[1]))
        g = math.tanh(a[2])
        o = 1 / (1 + math.exp(-a[3]))
        c = f * c + i * g
        h = o * math.tanh(c)
        out.append(h)
    return out


def test_recurrent_matches_hand_unrolled_recursion():
    # hand-set 1-dim gates, 3 frames; oracle computed by the scalar recursion above
    wx = [0.7, -0.3, 1.1, 0.5]
    u = [0.2, 0.4, -0.6, 0.9]
    b = [0.1, -0.2, 0.3, 0.0]
    xs = [0.5, -1.0, 0.25]
    expected = hand_lstm(xs, wx, u, b)

    layer = Recurrent(1, 1, "forward", rng=make_rng())
    layer.fwd[0].data = np.array(wx).reshape(4, 1)
    layer.fwd[1].data = np.array(u).reshape(4, 1)
    layer.fwd[2].data = np.array(b)
    out = layer(constant(np.array(xs).reshape(3, 1))).data
    np.testing.assert_allclose(out.reshape(-1), expected, rtol=1e-12)


def test_cell_matches_fused_layer():
    rng = make_rng()
    layer = Recurrent(3, 4, "forward", rng=rng)
    cell = LSTMCell(3, 4, params=layer.fwd)
    x = rng.uniform(-1, 1, (6, 3))
    fused = layer(constant(x)).data
    h, c = cell.initial_state()
    stepped = []
    for t in range(6):
        h, c = cell.step(constant(x[t:t + 1]), h, c)
        stepped.append(h.data[0])
    np.testing.assert_allclose(fused, np.array(stepped), rtol=1e-12, atol=1e-14)


def test_bidirectional_reversal_equivariance():
    # structural wiring property; visible when both directions share one cell
    rng = make_rng()
    layer = Recurrent(2, 3, "bidirectional", rng=rng)
    for fwd_t, bwd_t in zip(layer.fwd, layer.bwd):
        bwd_t.data = fwd_t.data.copy()
    x = rng.uniform(-1, 1, (7, 2))
    out = layer(constant(x)).data
    rev = layer(constant(x[::-1].copy())).data
    h = 3
    np.testing.assert_allclose(rev[:, :h], out[::-1, h:], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(rev[:, h:], out[::-1, :h], rtol=1e-12, atol=1e-14)


def test_recurrent_grad_check_all_directions():
    rng = make_rng()
    x_arr = rng.uniform(-1, 1, (5, 2))
    for direction in ("forward", "backward", "bidirectional"):
        layer = Recurrent(2, 3, direction, rng=rng)
        x = ad.param(x_arr.copy(), "x")
        params = {"x": x, **layer.parameters()}
        result = grad_check(lambda: ad.mean_all(ad.square(layer(x))), params)
        assert result.ok, f"{direction}: {result}"


def test_cell_grad_check():
    rng = make_rng()
    cell = LSTMCell(2, 3, rng=rng)
    x = ad.param(rng.uniform(-1, 1, (1, 2)), "x")

    def build():
        h, c = cell.initial_state()
        for _ in range(3):
            h, c = cell.step(x, h, c)
        return ad.mean_all(ad.square(h))

    assert grad_check(build, {"x": x, **cell.parameters()}).ok


def test_recurrent_width_mismatch():
    layer = Recurrent(3, 4, rng=make_rng())
    with pytest.raises(ShapeError):
        layer(constant(np.zeros((5, 2))))


# ---------------------------------------------------------------------------
# segments


def test_segment_spec_validation():
    with pytest.raises(ValueError):
        SegmentSpec(((0, 2), (3, 5)))  # gap
    with pytest.raises(ValueError):
        SegmentSpec(((0, 0),))  # empty interval
    with pytest.raises(ValueError):
        SegmentSpec(((1, 3),))  # does not start at 0
    spec = SegmentSpec(((0, 2), (2, 5)))
    assert spec.n_segments == 2
    assert spec.total_frames == 5
    assert spec.lengths() == (2, 3)


def test_containment_map_rejects_crossing():
    words = SegmentSpec(((0, 2), (2, 4)))
    phrases = SegmentSpec(((0, 3), (3, 4)))
    with pytest.raises(ValueError, match="crosses"):
        containment_map(words, phrases)
    ok = containment_map(SegmentSpec(((0, 2), (2, 3), (3, 4))),
                         SegmentSpec(((0, 3), (3, 4))))
    np.testing.assert_array_equal(ok, [0, 0, 1])


def test_pool_mean_of_two_rows():
    x = constant(np.array([[1.0, 3.0], [3.0, 5.0]]))
    out = segment_mean_pool(x, SegmentSpec(((0, 2),)))
    np.testing.assert_array_equal(out.data, [[2.0, 4.0]])


def test_pool_identity_on_unit_segments():
    x = constant(np.array([[1.0], [2.0], [3.0]]))
    out = segment_mean_pool(x, SegmentSpec(((0, 1), (1, 2), (2, 3))))
    np.testing.assert_array_equal(out.data, x.data)


def test_pool_hand_case():
    x = constant(np.array([[0.0], [2.0], [10.0]]))
    out = segment_mean_pool(x, SegmentSpec(((0, 2), (2, 3))))
    np.testing.assert_array_equal(out.data, [[1.0], [10.0]])


def test_broadcast_constant_and_mixed_lengths():
    z = constant(np.array([[5.0], [7.0]]))
    out = broadcast_segments(z, SegmentSpec(((0, 2), (2, 3))))
    np.testing.assert_array_equal(out.data, [[5.0], [5.0], [7.0]])
    single = broadcast_segments(constant(np.array([[2.0, 3.0]])), SegmentSpec(((0, 4),)))
    np.testing.assert_array_equal(single.data, np.tile([2.0, 3.0], (4, 1)))


def test_pool_broadcast_errors():
    with pytest.raises(ShapeError):
        segment_mean_pool(constant(np.zeros((4, 2))), SegmentSpec(((0, 3),)))
    with pytest.raises(ShapeError):
        broadcast_segments(constant(np.zeros((3, 2))), SegmentSpec(((0, 2), (2, 4))))


@st.composite
def segmentations(draw):
    lengths = draw(st.lists(st.integers(1, 7), min_size=1, max_size=6))
    return SegmentSpec.from_lengths(lengths)


@settings(max_examples=50, deadline=None)
@given(segmentations(), st.integers(0, 2 ** 31 - 1))
def test_pool_after_broadcast_is_exact_identity(seg, seed):
    # exact equality required, including awkward float values
    rng = np.random.default_rng(seed)
    z = rng.uniform(-10, 10, (seg.n_segments, 3)) * rng.choice([1e-8, 0.1, 1.0, 1e6])
    pooled = segment_mean_pool(broadcast_segments(constant(z), seg), seg)
    assert pooled.data.tobytes() == z.tobytes()


def test_pool_and_broadcast_grad_check():
    rng = make_rng()
    seg = SegmentSpec(((0, 2), (2, 5), (5, 6)))
    x = ad.param(rng.uniform(-1, 1, (6, 3)), "x")
    z = ad.param(rng.uniform(-1, 1, (3, 3)), "z")

    def build():
        pooled = segment_mean_pool(x, seg)
        spread = broadcast_segments(z, seg)
        return ad.mean_all(ad.square(ad.add(broadcast_segments(pooled, seg), spread)))

    assert grad_check(build, {"x": x, "z": z}).ok
