"""Op contracts: frozen trivial values, independent oracles, round-trip laws."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agbpipe.errors import InvalidArgument
from agbpipe.numcore import Tensor, ops
from agbpipe.numcore.rng import Prng


def t32(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float32), requires_grad=grad)


# ---------------------------------------------------------------------------
# conv2d
# ---------------------------------------------------------------------------


def conv2d_oracle(x, w, b, stride, pad):
    """Naive quadruple-loop direct-summation cross-correlation."""
    B, Cin, H, W = x.shape
    Cout, _, kh, kw = w.shape
    Ho = (H + 2 * pad - kh) // stride + 1
    Wo = (W + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((B, Cout, Ho, Wo), dtype=np.float64)
    for bi in range(B):
        for co in range(Cout):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for ci in range(Cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[bi, ci, i * stride + u, j * stride + v] * w[co, ci, u, v]
                    out[bi, co, i, j] = acc + b[co]
    return out


class TestConv2d:
    def test_scaling_identity(self):
        x = t32(np.ones((1, 1, 3, 3)))
        w = t32(np.full((1, 1, 1, 1), 2.0))
        b = t32(np.zeros(1))
        y = ops.conv2d(x, w, b)
        assert y.shape == (1, 1, 3, 3)
        assert np.array_equal(y.data, np.full((1, 1, 3, 3), 2.0, dtype=np.float32))

    def test_cross_correlation_definition(self):
        x = t32(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        w = t32(np.array([[1.0, 0.0], [0.0, 1.0]]).reshape(1, 1, 2, 2))
        y = ops.conv2d(x, w, t32(np.zeros(1)))
        assert y.shape == (1, 1, 1, 1)
        assert y.data.reshape(-1)[0] == 5.0

    def test_against_naive_oracle(self):
        r = Prng(17)
        x = r.child(1).normal((2, 3, 8, 8), dtype=np.float64)
        w = r.child(2).normal((4, 3, 3, 3), dtype=np.float64)
        b = r.child(3).normal((4,), dtype=np.float64)
        y = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1)
        assert y.shape == (2, 4, 4, 4)
        expected = conv2d_oracle(x, w, b, 2, 1)
        assert np.allclose(y.data, expected, rtol=1e-12, atol=1e-12)

    def test_channel_mismatch_rejected(self):
        with pytest.raises(InvalidArgument):
            ops.conv2d(t32(np.ones((1, 3, 4, 4))), t32(np.ones((2, 4, 3, 3))), None)

    def test_kernel_larger_than_input_rejected(self):
        with pytest.raises(InvalidArgument):
            ops.conv2d(t32(np.ones((1, 1, 2, 2))), t32(np.ones((1, 1, 5, 5))), None)


# ---------------------------------------------------------------------------
# pixel shuffle
# ---------------------------------------------------------------------------


class TestPixelShuffle:
    def test_r1_identity(self):
        x = t32(np.arange(24.0).reshape(1, 2, 3, 4))
        assert np.array_equal(ops.pixel_shuffle(x, 1).data, x.data)

    def test_forced_by_index_formula(self):
        x = t32(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1))
        y = ops.pixel_shuffle(x, 2)
        assert np.array_equal(y.data.reshape(2, 2), [[1.0, 2.0], [3.0, 4.0]])

    def test_index_contract_random(self):
        r = np.random.default_rng(0)
        x = r.standard_normal((2, 8, 3, 5)).astype(np.float32)
        y = ops.pixel_shuffle(Tensor(x), 2).data
        assert y.shape == (2, 2, 6, 10)
        for b, c, h, w, i, j in [(0, 1, 2, 4, 1, 0), (1, 0, 0, 0, 0, 1), (1, 1, 2, 3, 1, 1)]:
            assert y[b, c, 2 * h + i, 2 * w + j] == x[b, c * 4 + i * 2 + j, h, w]

    @given(
        b=st.integers(1, 2), c=st.integers(1, 3), h=st.integers(1, 5), w=st.integers(1, 5),
        r=st.integers(1, 3), seed=st.integers(0, 10_000),
    )
    @settings(max_examples=40, deadline=None)
    def test_inverse_recovers_bit_exactly(self, b, c, h, w, r, seed):
        x = np.random.default_rng(seed).standard_normal((b, c * r * r, h, w)).astype(np.float32)
        y = ops.pixel_shuffle(Tensor(x), r)
        back = ops._ps_inv(y.data, r)
        assert np.array_equal(back, x)

    def test_indivisible_channels_rejected(self):
        with pytest.raises(InvalidArgument):
            ops.pixel_shuffle(t32(np.ones((1, 3, 2, 2))), 2)


# ---------------------------------------------------------------------------
# window partition / reverse
# ---------------------------------------------------------------------------


class TestWindows:
    def test_single_window_is_row_major_flatten(self):
        x = np.arange(2 * 3 * 3 * 1, dtype=np.float32).reshape(2, 3, 3, 1)
        w = ops.window_partition(Tensor(x), 3, 0)
        assert w.shape == (2, 9, 1)
        assert np.array_equal(w.data[0, :, 0], x[0].reshape(-1))

    def test_index_arithmetic_oracle(self):
        x = np.arange(16.0, dtype=np.float32).reshape(1, 4, 4, 1)
        w = ops.window_partition(Tensor(x), 2, 0)
        expected = [[0, 1, 4, 5], [2, 3, 6, 7], [8, 9, 12, 13], [10, 11, 14, 15]]
        assert np.array_equal(w.data[:, :, 0], np.asarray(expected, dtype=np.float32))

    @given(
        b=st.integers(1, 2), c=st.integers(1, 3), nh=st.integers(1, 3), nw=st.integers(1, 3),
        w=st.integers(1, 4), seed=st.integers(0, 10_000), shift_frac=st.floats(0, 0.99),
    )
    @settings(max_examples=40, deadline=None)
    def test_round_trip_identity(self, b, c, nh, nw, w, seed, shift_frac):
        H, W = nh * w, nw * w
        shift = int(shift_frac * w)
        x = np.random.default_rng(seed).standard_normal((b, H, W, c)).astype(np.float32)
        wins = ops.window_partition(Tensor(x), w, shift)
        back = ops.window_reverse(wins, w, shift, (H, W))
        assert np.array_equal(back.data, x)

    def test_indivisible_grid_rejected(self):
        with pytest.raises(InvalidArgument):
            ops.window_partition(t32(np.ones((1, 5, 4, 2))), 2, 0)

    def test_bad_shift_rejected(self):
        with pytest.raises(InvalidArgument):
            ops.window_partition(t32(np.ones((1, 4, 4, 2))), 2, 2)


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------


def attention_oracle(q, k, v, heads, bias=None, mask=None):
    """Per-head python-loop attention in float64."""
    N, L, D = q.shape
    dh = D // heads
    out = np.zeros_like(q)
    for n in range(N):
        for h in range(heads):
            sl = slice(h * dh, (h + 1) * dh)
            qs, ks, vs = q[n, :, sl], k[n, :, sl], v[n, :, sl]
            scores = qs @ ks.T / np.sqrt(dh)
            if bias is not None:
                scores = scores + bias[h]
            if mask is not None:
                scores = scores + mask
            e = np.exp(scores - scores.max(axis=-1, keepdims=True))
            a = e / e.sum(axis=-1, keepdims=True)
            out[n, :, sl] = a @ vs
    return out


class TestAttention:
    def test_singleton_sequence_returns_v(self):
        r = Prng(3)
        q, k, v = (Tensor(r.child(i).normal((2, 1, 6), dtype=np.float32)) for i in range(3))
        y = ops.multi_head_attention(q, k, v, heads=2)
        assert np.allclose(y.data, v.data, atol=1e-7)

    def test_equal_logits_give_uniform_mean(self):
        r = Prng(4)
        q = Tensor(np.zeros((1, 5, 8), dtype=np.float32))
        k = Tensor(r.child(1).normal((1, 5, 8), dtype=np.float32))
        v = Tensor(r.child(2).normal((1, 5, 8), dtype=np.float32))
        y = ops.multi_head_attention(q, k, v, heads=2)
        assert np.allclose(y.data, np.broadcast_to(v.data.mean(axis=1, keepdims=True), v.shape), atol=1e-6)

    def test_against_naive_oracle(self):
        r = Prng(5)
        q = r.child(1).normal((2, 4, 8), dtype=np.float64)
        k = r.child(2).normal((2, 4, 8), dtype=np.float64)
        v = r.child(3).normal((2, 4, 8), dtype=np.float64)
        bias = r.child(4).normal((2, 4, 4), 0.0, 0.5, dtype=np.float64)
        y = ops.multi_head_attention(Tensor(q), Tensor(k), Tensor(v), 2, rel_bias=Tensor(bias))
        expected = attention_oracle(q, k, v, 2, bias=bias)
        rel = np.abs(y.data - expected) / np.maximum(np.abs(expected), 1e-9)
        assert rel.max() < 1e-6

    def test_masked_positions_get_exactly_zero_weight(self):
        r = Prng(6)
        q = Tensor(r.child(1).normal((1, 4, 4), dtype=np.float32))
        k = Tensor(r.child(2).normal((1, 4, 4), dtype=np.float32))
        v1 = r.child(3).normal((1, 4, 4), dtype=np.float32)
        mask = np.zeros((4, 4), dtype=np.float32)
        mask[:, 3] = -np.inf
        y1 = ops.multi_head_attention(q, k, Tensor(v1.copy()), 1, attn_mask=mask)
        v2 = v1.copy()
        v2[0, 3, :] = 1e6  # masked key's value must be invisible
        y2 = ops.multi_head_attention(q, k, Tensor(v2), 1, attn_mask=mask)
        assert np.array_equal(y1.data, y2.data)

    def test_softmax_rows_sum_to_one_with_mask(self):
        x = np.array([[1.0, -np.inf, 0.5], [0.0, 0.0, -np.inf]], dtype=np.float32)
        s = ops.softmax(Tensor(x), axis=-1).data
        assert np.allclose(s.sum(axis=-1), 1.0, atol=1e-6)
        assert s[0, 1] == 0.0 and s[1, 2] == 0.0

    def test_indivisible_heads_rejected(self):
        x = t32(np.ones((1, 2, 6)))
        with pytest.raises(InvalidArgument):
            ops.multi_head_attention(x, x, x, heads=4)


# ---------------------------------------------------------------------------
# remaining primitives
# ---------------------------------------------------------------------------


class TestPrimitives:
    def test_relu_values(self):
        y = ops.relu(t32([-1.0, 0.0, 2.0]))
        assert np.array_equal(y.data, [0.0, 0.0, 2.0])

    def test_softmax_equal_logits(self):
        for n in (2, 5, 9):
            s = ops.softmax(Tensor(np.zeros((1, n), dtype=np.float64))).data
            assert np.allclose(s, 1.0 / n, atol=1e-12)

    def test_layer_norm_moments(self):
        r = Prng(8)
        x = Tensor(r.normal((4, 7, 16), 3.0, 2.5, dtype=np.float64))
        g = Tensor(np.ones(16))
        b = Tensor(np.zeros(16))
        y = ops.layer_norm(x, g, b).data
        assert np.abs(y.mean(axis=-1)).max() < 1e-7
        assert np.abs(y.var(axis=-1) - 1.0).max() < 1e-4  # eps shifts variance slightly

    def test_max_pool_values(self):
        x = np.arange(16.0, dtype=np.float32).reshape(1, 1, 4, 4)
        y = ops.max_pool2d(Tensor(x), 2).data
        assert np.array_equal(y[0, 0], [[5.0, 7.0], [13.0, 15.0]])

    def test_adaptive_avg_pool_against_oracle(self):
        r = Prng(9)
        x = r.normal((2, 3, 7, 5), dtype=np.float64)
        y = ops.adaptive_avg_pool2d(Tensor(x), (3, 2)).data
        for i in range(3):
            h0, h1 = (i * 7) // 3, -((-(i + 1) * 7) // 3)
            for j in range(2):
                w0, w1 = (j * 5) // 2, -((-(j + 1) * 5) // 2)
                assert np.allclose(y[:, :, i, j], x[:, :, h0:h1, w0:w1].mean(axis=(2, 3)))

    def test_adaptive_pool_upsampling_regions(self):
        x = Tensor(np.array([[[[2.0]]]], dtype=np.float32))
        y = ops.adaptive_avg_pool2d(x, (3, 3)).data
        assert np.array_equal(y, np.full((1, 1, 3, 3), 2.0, dtype=np.float32))

    def test_bilinear_resize_against_oracle(self):
        def oracle(x, oh, ow):
            B, C, H, W = x.shape
            out = np.zeros((B, C, oh, ow))
            for i in range(oh):
                cy = min(max((i + 0.5) * H / oh - 0.5, 0), H - 1)
                y0, fy = int(np.floor(cy)), cy - int(np.floor(cy))
                y1 = min(y0 + 1, H - 1)
                for j in range(ow):
                    cx = min(max((j + 0.5) * W / ow - 0.5, 0), W - 1)
                    x0, fx = int(np.floor(cx)), cx - int(np.floor(cx))
                    x1 = min(x0 + 1, W - 1)
                    out[:, :, i, j] = (
                        x[:, :, y0, x0] * (1 - fy) * (1 - fx)
                        + x[:, :, y0, x1] * (1 - fy) * fx
                        + x[:, :, y1, x0] * fy * (1 - fx)
                        + x[:, :, y1, x1] * fy * fx
                    )
            return out

        r = Prng(10)
        x = r.normal((2, 3, 5, 4), dtype=np.float64)
        y = ops.bilinear_resize(Tensor(x), (9, 7)).data
        assert np.allclose(y, oracle(x, 9, 7), atol=1e-12)

    def test_bilinear_preserves_constants(self):
        x = Tensor(np.full((1, 2, 4, 4), 3.25, dtype=np.float32))
        y = ops.bilinear_resize(x, (7, 9)).data
        assert np.allclose(y, 3.25, atol=1e-6)

    def test_concat_and_roll(self):
        a = t32(np.ones((1, 2, 2)))
        b = t32(np.zeros((1, 3, 2)))
        c = ops.concat([a, b], axis=1)
        assert c.shape == (1, 5, 2)
        rolled = ops.roll(c, (1,), (1,)).data
        expected = np.array([[0, 0], [1, 1], [1, 1], [0, 0], [0, 0]], dtype=np.float32)
        assert np.array_equal(rolled[0], expected)
