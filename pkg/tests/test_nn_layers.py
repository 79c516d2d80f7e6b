import math

import numpy as np
import pytest

from replaymap.nn.layers import (
    BatchNorm,
    batch_norm,
    dw_separable_conv2d,
    depthwise_conv2d,
    elu,
    max_pool_2x2,
    pointwise_conv2d,
    softmax,
    softmax_cross_entropy,
)


def direct_conv_oracle(x, depthwise, pointwise, bias):
    """Six-nested-loop depthwise separable convolution (brute-force oracle)."""
    b_count, c_in, h, w = x.shape
    c_out = pointwise.shape[0]
    k = depthwise.shape[1]
    pad = k // 2
    mid = np.zeros((b_count, c_in, h, w))
    for b in range(b_count):
        for c in range(c_in):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for di in range(k):
                        for dj in range(k):
                            si, sj = i + di - pad, j + dj - pad
                            if 0 <= si < h and 0 <= sj < w:
                                acc += depthwise[c, di, dj] * x[b, c, si, sj]
                    mid[b, c, i, j] = acc
    out = np.zeros((b_count, c_out, h, w))
    for b in range(b_count):
        for o in range(c_out):
            out[b, o] = bias[o]
            for c in range(c_in):
                out[b, o] += pointwise[o, c] * mid[b, c]
    return out


class TestDepthwiseSeparableConv:
    def test_identity_kernels_pass_input_through(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 3, 6, 5))
        depthwise = np.zeros((3, 3, 3))
        depthwise[:, 1, 1] = 1.0
        out = dw_separable_conv2d(x, depthwise, np.eye(3), np.zeros(3))
        np.testing.assert_allclose(out, x, atol=1e-15)

    def test_zero_input_broadcasts_bias(self):
        rng = np.random.default_rng(1)
        bias = rng.standard_normal(4)
        out = dw_separable_conv2d(
            np.zeros((2, 2, 5, 5)), rng.standard_normal((2, 3, 3)),
            rng.standard_normal((4, 2)), bias,
        )
        np.testing.assert_array_equal(out, np.broadcast_to(bias[None, :, None, None], out.shape))

    def test_matches_direct_convolution_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 2, 5, 5))
        depthwise = rng.standard_normal((2, 3, 3))
        pointwise = rng.standard_normal((4, 2))
        bias = rng.standard_normal(4)
        out = dw_separable_conv2d(x, depthwise, pointwise, bias)
        np.testing.assert_allclose(out, direct_conv_oracle(x, depthwise, pointwise, bias),
                                   rtol=1e-12, atol=1e-13)

    def test_shape_and_validation(self):
        x = np.zeros((1, 3, 8, 4))
        with pytest.raises(ValueError, match="odd"):
            depthwise_conv2d(x, np.zeros((3, 2, 2)))
        with pytest.raises(ValueError, match="channels"):
            depthwise_conv2d(x, np.zeros((2, 3, 3)))
        with pytest.raises(ValueError, match="channels"):
            pointwise_conv2d(x, np.zeros((4, 2)), np.zeros(4))


class TestBatchNorm:
    def test_train_mode_standardizes(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((8, 3, 5, 4)) * 3.0 + 1.5
        y = batch_norm(x, gain=np.ones(3), bias=np.zeros(3), mode="train")
        np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-6)
        np.testing.assert_allclose(y.var(axis=(0, 2, 3)), 1.0, atol=1e-4)

    def test_eval_with_matching_running_stats_gives_zero(self):
        x = np.full((4, 2, 3, 3), 1.25)
        y = batch_norm(
            x, gain=np.ones(2), bias=np.zeros(2), mode="eval",
            running_mean=np.full(2, 1.25), running_var=np.full(2, 0.5),
        )
        np.testing.assert_allclose(y, 0.0, atol=1e-12)

    def test_matches_explicit_recomputation(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((6, 4, 3, 2))
        gain = rng.standard_normal(4)
        bias = rng.standard_normal(4)
        y = batch_norm(x, gain, bias, eps=1e-5, mode="train")
        mean = x.mean(axis=(0, 2, 3), keepdims=True)
        var = x.var(axis=(0, 2, 3), keepdims=True)
        expected = gain[None, :, None, None] * (x - mean) / np.sqrt(var + 1e-5) + bias[None, :, None, None]
        np.testing.assert_allclose(y, expected, rtol=1e-10, atol=1e-12)

    def test_dense_input_axes(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((32, 7))
        y = batch_norm(x, np.ones(7), np.zeros(7), mode="train")
        np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-10)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError, match="batch"):
            batch_norm(np.zeros((0, 2, 3, 3)), np.ones(2), np.zeros(2), mode="train")

    def test_running_stats_update_with_momentum(self):
        rng = np.random.default_rng(3)
        layer = BatchNorm(3, dtype=np.float64)
        x = rng.standard_normal((16, 3, 4, 4))
        layer.forward(x, train=True)
        expected_mean = 0.1 * x.mean(axis=(0, 2, 3))
        expected_var = 0.9 * 1.0 + 0.1 * x.var(axis=(0, 2, 3))
        np.testing.assert_allclose(layer.buffers["running_mean"], expected_mean, rtol=1e-10)
        np.testing.assert_allclose(layer.buffers["running_var"], expected_var, rtol=1e-10)


class TestElu:
    def test_values(self):
        assert elu(np.array(0.0)) == 0.0
        assert elu(np.array(1.0)) == 1.0
        assert elu(np.array(-1.0)) == pytest.approx(math.exp(-1) - 1)

    def test_positive_identity_negative_bounded(self):
        x = np.linspace(-10, 10, 101)
        y = elu(x)
        np.testing.assert_array_equal(y[x > 0], x[x > 0])
        assert np.all(y >= -1.0)


class TestMaxPool:
    def test_single_window(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        np.testing.assert_array_equal(max_pool_2x2(x), [[[[4.0]]]])

    def test_constant_stays_constant(self):
        out = max_pool_2x2(np.full((2, 3, 8, 6), 2.5))
        np.testing.assert_array_equal(out, np.full((2, 3, 4, 3), 2.5))

    def test_floor_semantics_on_odd_dims(self):
        out = max_pool_2x2(np.zeros((1, 4, 91, 41)))
        assert out.shape == (1, 4, 45, 20)

    def test_pool_chain_reaches_11x5(self):
        x = np.zeros((1, 1, 91, 41))
        for _ in range(3):
            x = max_pool_2x2(x)
        assert x.shape[2:] == (11, 5)

    def test_dropped_tail_does_not_affect_result(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 2, 7, 9))
        np.testing.assert_array_equal(max_pool_2x2(x), max_pool_2x2(x[:, :, :6, :8]))


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_one_hot_target(self):
        loss, grad = softmax_cross_entropy(np.zeros((1, 2)), np.array([[1.0, 0.0]]))
        assert loss == pytest.approx(math.log(2))
        np.testing.assert_allclose(grad, [[-0.5, 0.5]])

    def test_confident_correct_logits_loss_near_zero(self):
        loss, _ = softmax_cross_entropy(np.array([[30.0, 0.0]]), np.array([[1.0, 0.0]]))
        assert loss < 1e-12

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((4, 2))
        raw = rng.uniform(0.1, 1.0, (4, 2))
        targets = raw / raw.sum(axis=1, keepdims=True)
        _, grad = softmax_cross_entropy(logits, targets)
        step = 1e-6
        for i in range(4):
            for j in range(2):
                up = logits.copy(); up[i, j] += step
                down = logits.copy(); down[i, j] -= step
                numeric = (softmax_cross_entropy(up, targets)[0]
                           - softmax_cross_entropy(down, targets)[0]) / (2 * step)
                assert abs(grad[i, j] - numeric) / max(abs(numeric), 1e-8) < 1e-6

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        probs = softmax(rng.standard_normal((10, 2)) * 20)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(probs >= 0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros((2, 2)), np.zeros((3, 2)))


class TestDebugNanGuard:
    def test_guard_raises_on_non_finite_layer_output(self):
        from replaymap.nn import layers
        from replaymap.nn.gradcheck import make_reduced_net

        net = make_reduced_net(seed=0)
        bad = np.full((1, 2, 8, 12), np.inf)
        layers.DEBUG_NAN_CHECKS = True
        try:
            with pytest.raises(FloatingPointError):
                with np.errstate(all="ignore"):
                    net.forward(bad, train=False)
        finally:
            layers.DEBUG_NAN_CHECKS = False
        with np.errstate(all="ignore"):
            net.forward(bad, train=False)  # guard off: no exception
