"""Gradient verification against central finite differences.

Runs on a reduced float64 model (small maps, few channels) because finite
differences are meaningless at float32.  Batch-norm layers run in train
mode so the gradient flows through the batch statistics.
"""

from __future__ import annotations

import numpy as np

from .layers import softmax_cross_entropy
from .model import ArchConfig, ReplayNet


def reduced_arch() -> ArchConfig:
    """A miniature architecture that still exercises every layer type."""
    return ArchConfig(
        in_bands=2,
        in_shape=(8, 12),
        block_channels=(4, 6, 8),
        block_kernels=(3, 3, 3),
        final_kernel=3,
        proj_channels=2,
        hidden_units=8,
    )


def make_reduced_net(seed: int = 0) -> ReplayNet:
    return ReplayNet(reduced_arch(), seed=seed, dtype=np.float64)


def _loss(net: ReplayNet, inputs: np.ndarray, targets: np.ndarray) -> float:
    logits = net.forward(inputs, train=True)
    loss, _ = softmax_cross_entropy(logits, targets)
    return loss


def analytic_gradients(net: ReplayNet, inputs: np.ndarray, targets: np.ndarray) -> dict[str, np.ndarray]:
    net.zero_grads()
    logits = net.forward(inputs, train=True)
    _, grad = softmax_cross_entropy(logits, targets)
    net.backward(grad)
    return {name: value.copy() for name, value in net.named_gradients().items()}


def finite_difference_gradients(
    net: ReplayNet, inputs: np.ndarray, targets: np.ndarray, step: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central differences of the loss with respect to every parameter element."""
    numeric: dict[str, np.ndarray] = {}
    for name, tensor in net.named_parameters().items():
        grad = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            upper = _loss(net, inputs, targets)
            flat[i] = original - step
            lower = _loss(net, inputs, targets)
            flat[i] = original
            gflat[i] = (upper - lower) / (2.0 * step)
        numeric[name] = grad
    return numeric


def gradient_errors(
    analytic: dict[str, np.ndarray],
    numeric: dict[str, np.ndarray],
    rel_floor: float = 1e-6,
    abs_tol: float = 1e-7,
) -> dict[str, float]:
    """Per-tensor worst-case relative error.

    Elements where both gradients are below ``rel_floor`` fall back to an
    absolute comparison: they contribute 0 when |a - n| <= abs_tol and blow
    up the error otherwise.
    """
    errors: dict[str, float] = {}
    for name, a in analytic.items():
        n = numeric[name]
        diff = np.abs(a - n)
        denom = np.maximum(np.abs(a), np.abs(n))
        small = denom < rel_floor
        rel = np.where(small, np.where(diff <= abs_tol, 0.0, diff / abs_tol), diff / np.maximum(denom, rel_floor))
        errors[name] = float(rel.max())
    return errors


def grad_check(
    net: ReplayNet, inputs: np.ndarray, targets: np.ndarray, step: float = 1e-5
) -> float:
    """Maximum relative error between analytic and finite-difference gradients."""
    if net.dtype != np.float64:
        raise ValueError("gradient checking requires a float64 model")
    analytic = analytic_gradients(net, inputs, targets)
    numeric = finite_difference_gradients(net, inputs, targets, step=step)
    return max(gradient_errors(analytic, numeric).values())
