"""Tensor ops and layers with handwritten forward/backward passes.

Everything is plain numpy.  Each layer owns its parameters (``params``),
accumulates gradients of the same shapes (``grads``), and caches whatever
its backward pass needs during ``forward(..., train=True)``.  Training runs
in float32; gradient checking builds float64 layers.
"""

from __future__ import annotations

import numpy as np

DEBUG_NAN_CHECKS = False
"""When True, every layer asserts its output is finite (slow; for debugging)."""


def _check(x: np.ndarray) -> np.ndarray:
    if DEBUG_NAN_CHECKS and not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite values produced by a layer")
    return x


def elu(x: np.ndarray) -> np.ndarray:
    """x for x > 0, exp(x) - 1 otherwise."""
    return np.where(x > 0, x, np.expm1(x))


def max_pool_2x2(x: np.ndarray) -> np.ndarray:
    """Non-overlapping 2x2 max pooling with floor semantics on odd dims."""
    b, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    windows = x[:, :, : 2 * h2, : 2 * w2].reshape(b, c, h2, 2, w2, 2)
    return windows.max(axis=(3, 5))


def depthwise_conv2d(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-channel k x k convolution with same padding (odd k), no bias."""
    c, k, _ = weights.shape
    if k % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {k}")
    if x.shape[1] != c:
        raise ValueError(f"input has {x.shape[1]} channels, kernel expects {c}")
    pad = k // 2
    b, _, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros_like(x)
    for i in range(k):
        for j in range(k):
            out += weights[:, i, j][None, :, None, None] * xp[:, :, i : i + h, j : j + w]
    return out


def pointwise_conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """1x1 cross-channel mix: weights (C_out, C_in), bias (C_out,)."""
    if x.shape[1] != weights.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, weights expect {weights.shape[1]}")
    return np.einsum("oc,bchw->bohw", weights, x) + bias[None, :, None, None]


def dw_separable_conv2d(
    x: np.ndarray, depthwise: np.ndarray, pointwise: np.ndarray, bias: np.ndarray
) -> np.ndarray:
    """Depthwise spatial conv followed by a 1x1 pointwise mix with bias."""
    return pointwise_conv2d(depthwise_conv2d(x, depthwise), pointwise, bias)


def batch_norm(
    x: np.ndarray,
    gain: np.ndarray,
    bias: np.ndarray,
    eps: float = 1e-5,
    mode: str = "train",
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
) -> np.ndarray:
    """Normalize per channel over batch (+ spatial dims for 4-D input).

    ``train`` uses batch statistics; ``eval`` requires running statistics.
    """
    axes = (0, 2, 3) if x.ndim == 4 else (0,)
    shape = (1, -1, 1, 1) if x.ndim == 4 else (1, -1)
    if mode == "train":
        if x.shape[0] == 0:
            raise ValueError("batch size must be >= 1 in train mode")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
    elif mode == "eval":
        if running_mean is None or running_var is None:
            raise ValueError("eval mode requires running statistics")
        mean, var = running_mean, running_var
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    xhat = (x - mean.reshape(shape)) / np.sqrt(var.reshape(shape) + eps)
    return gain.reshape(shape) * xhat + bias.reshape(shape)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy over the batch and its logits gradient.

    ``targets`` are soft labels (rows sum to 1).  The gradient is
    ``(softmax(logits) - targets) / batch``.
    """
    if logits.shape != targets.shape:
        raise ValueError(f"logits {logits.shape} and targets {targets.shape} differ")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-(targets * log_probs).sum() / logits.shape[0])
    grad = (np.exp(log_probs) - targets) / logits.shape[0]
    return loss, grad.astype(logits.dtype)


class Layer:
    """Base layer: parameter dicts plus cached state for backward."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def zero_grads(self) -> None:
        for name, value in self.params.items():
            self.grads[name] = np.zeros_like(value)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class DepthwiseConv2d(Layer):
    def __init__(self, channels: int, kernel_size: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.kernel_size = kernel_size
        scale = 1.0 / kernel_size  # 1/sqrt(k*k) fan-in scaling
        self.params["weight"] = (
            rng.standard_normal((channels, kernel_size, kernel_size)) * scale
        ).astype(dtype)
        self.zero_grads()
        self._cache = None

    def forward(self, x, train=False):
        if train:
            self._cache = x
        return _check(depthwise_conv2d(x, self.params["weight"]))

    def backward(self, grad_out):
        x = self._cache
        w = self.params["weight"]
        c, k, _ = w.shape
        pad = k // 2
        b, _, h, width = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        gp = np.zeros_like(xp)
        dw = self.grads["weight"]
        for i in range(k):
            for j in range(k):
                dw[:, i, j] += np.einsum(
                    "bchw,bchw->c", grad_out, xp[:, :, i : i + h, j : j + width]
                )
                gp[:, :, i : i + h, j : j + width] += (
                    w[:, i, j][None, :, None, None] * grad_out
                )
        return gp[:, :, pad : pad + h, pad : pad + width]


class Conv1x1(Layer):
    """Pointwise channel mix with bias; also used as the 2-channel projection."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        scale = np.sqrt(2.0 / in_channels)
        self.params["weight"] = (rng.standard_normal((out_channels, in_channels)) * scale).astype(dtype)
        self.params["bias"] = np.zeros(out_channels, dtype=dtype)
        self.zero_grads()
        self._cache = None

    def forward(self, x, train=False):
        if train:
            self._cache = x
        return _check(pointwise_conv2d(x, self.params["weight"], self.params["bias"]))

    def backward(self, grad_out):
        x = self._cache
        self.grads["weight"] += np.einsum("bohw,bchw->oc", grad_out, x)
        self.grads["bias"] += grad_out.sum(axis=(0, 2, 3))
        return np.einsum("oc,bohw->bchw", self.params["weight"], grad_out)


class BatchNorm(Layer):
    """Channel-wise batch normalization for (B, C, H, W) or (B, C) inputs."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.params["gain"] = np.ones(channels, dtype=dtype)
        self.params["bias"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)
        self.zero_grads()
        self._cache = None

    @staticmethod
    def _axes_shape(x):
        return ((0, 2, 3), (1, -1, 1, 1)) if x.ndim == 4 else ((0,), (1, -1))

    def forward(self, x, train=False):
        axes, shape = self._axes_shape(x)
        if train:
            if x.shape[0] == 0:
                raise ValueError("batch size must be >= 1 in train mode")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            mom = self.momentum
            self.buffers["running_mean"] = (
                (1 - mom) * self.buffers["running_mean"] + mom * mean
            ).astype(x.dtype)
            self.buffers["running_var"] = (
                (1 - mom) * self.buffers["running_var"] + mom * var
            ).astype(x.dtype)
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        if train:
            self._cache = (xhat, inv_std, axes, shape)
        return _check(self.params["gain"].reshape(shape) * xhat + self.params["bias"].reshape(shape))

    def backward(self, grad_out):
        xhat, inv_std, axes, shape = self._cache
        m = grad_out.size // grad_out.shape[1]
        self.grads["gain"] += (grad_out * xhat).sum(axis=axes)
        self.grads["bias"] += grad_out.sum(axis=axes)
        dxhat = grad_out * self.params["gain"].reshape(shape)
        term = (
            m * dxhat
            - dxhat.sum(axis=axes).reshape(shape)
            - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape)
        )
        return inv_std.reshape(shape) * term / m


class Elu(Layer):
    def forward(self, x, train=False):
        y = elu(x)
        if train:
            self._cache = (x > 0, y)
        return _check(y)

    def backward(self, grad_out):
        positive, y = self._cache
        # derivative is 1 for x > 0 and exp(x) = y + 1 otherwise
        return grad_out * np.where(positive, np.ones_like(y), y + 1)


class MaxPool2x2(Layer):
    def forward(self, x, train=False):
        b, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        windows = (
            x[:, :, : 2 * h2, : 2 * w2]
            .reshape(b, c, h2, 2, w2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, h2, w2, 4)
        )
        idx = windows.argmax(axis=-1)
        if train:
            self._cache = (x.shape, idx)
        return np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad_out):
        (b, c, h, w), idx = self._cache
        h2, w2 = h // 2, w // 2
        gwin = np.zeros((b, c, h2, w2, 4), dtype=grad_out.dtype)
        np.put_along_axis(gwin, idx[..., None], grad_out[..., None], axis=-1)
        gx = np.zeros((b, c, h, w), dtype=grad_out.dtype)
        gx[:, :, : 2 * h2, : 2 * w2] = (
            gwin.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * h2, 2 * w2)
        )
        return gx


class Flatten(Layer):
    def forward(self, x, train=False):
        if train:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._cache)


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        scale = np.sqrt(2.0 / in_features)
        self.params["weight"] = (rng.standard_normal((in_features, out_features)) * scale).astype(dtype)
        self.params["bias"] = np.zeros(out_features, dtype=dtype)
        self.zero_grads()
        self._cache = None

    def forward(self, x, train=False):
        if train:
            self._cache = x
        return _check(x @ self.params["weight"] + self.params["bias"])

    def backward(self, grad_out):
        x = self._cache
        self.grads["weight"] += x.T @ grad_out
        self.grads["bias"] += grad_out.sum(axis=0)
        return grad_out @ self.params["weight"].T
