"""The lightweight depthwise-separable CNN that classifies acoustic maps.

Three conv blocks (depthwise separable conv, batch norm, ELU, 2x2 max pool)
with channels K->8->16->32 and kernels 5/3/3, a final separable conv without
pooling, a 1x1 projection to 2 channels, then a small dense head.  With the
stock 91x41 grid the flattened projection has exactly 110 features and the
whole model carries roughly 6k trainable parameters.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import (
    BatchNorm,
    Conv1x1,
    Dense,
    DepthwiseConv2d,
    Elu,
    Flatten,
    Layer,
    MaxPool2x2,
    softmax,
)

GENUINE_CLASS = 1
"""Class index whose softmax probability is the detection score."""


@dataclass(frozen=True)
class ArchConfig:
    in_bands: int = 4
    in_shape: tuple[int, int] = (91, 41)
    block_channels: tuple[int, ...] = (8, 16, 32)
    block_kernels: tuple[int, ...] = (5, 3, 3)
    final_kernel: int = 3
    proj_channels: int = 2
    hidden_units: int = 32
    n_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "in_shape", tuple(self.in_shape))
        object.__setattr__(self, "block_channels", tuple(self.block_channels))
        object.__setattr__(self, "block_kernels", tuple(self.block_kernels))
        if len(self.block_channels) != len(self.block_kernels):
            raise ValueError("block_channels and block_kernels must have equal length")
        if self.in_bands < 1:
            raise ValueError("in_bands must be >= 1")

    def flatten_dim(self) -> int:
        h, w = self.in_shape
        for _ in self.block_channels:
            h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ValueError(f"input shape {self.in_shape} pools away to nothing")
        return self.proj_channels * h * w


def stock_arch(in_bands: int = 4) -> ArchConfig:
    return ArchConfig(in_bands=in_bands)


class ReplayNet:
    """Sequential CNN with named layers and handwritten backward pass."""

    def __init__(self, arch: ArchConfig | None = None, seed: int | np.random.Generator = 0, dtype=np.float32):
        self.arch = arch or stock_arch()
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        a = self.arch
        layers: list[tuple[str, Layer]] = []
        in_ch = a.in_bands
        for index, (out_ch, k) in enumerate(zip(a.block_channels, a.block_kernels), start=1):
            name = f"block{index}"
            layers.append((f"{name}.depthwise", DepthwiseConv2d(in_ch, k, rng, dtype)))
            layers.append((f"{name}.pointwise", Conv1x1(in_ch, out_ch, rng, dtype)))
            layers.append((f"{name}.norm", BatchNorm(out_ch, dtype=dtype)))
            layers.append((f"{name}.act", Elu()))
            layers.append((f"{name}.pool", MaxPool2x2()))
            in_ch = out_ch
        layers.append(("final.depthwise", DepthwiseConv2d(in_ch, a.final_kernel, rng, dtype)))
        layers.append(("final.pointwise", Conv1x1(in_ch, in_ch, rng, dtype)))
        layers.append(("final.norm", BatchNorm(in_ch, dtype=dtype)))
        layers.append(("final.act", Elu()))
        layers.append(("project", Conv1x1(in_ch, a.proj_channels, rng, dtype)))
        layers.append(("flatten", Flatten()))
        flat = a.flatten_dim()
        layers.append(("head.dense1", Dense(flat, a.hidden_units, rng, dtype)))
        layers.append(("head.norm", BatchNorm(a.hidden_units, dtype=dtype)))
        layers.append(("head.act", Elu()))
        layers.append(("head.dense2", Dense(a.hidden_units, a.n_classes, rng, dtype)))
        self.layers = layers

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        expected = (self.arch.in_bands,) + self.arch.in_shape
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ValueError(f"input must have shape (B, {expected[0]}, {expected[1]}, {expected[2]}), got {x.shape}")
        for _, layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        grad = grad_logits
        for _, layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grads(self) -> None:
        for _, layer in self.layers:
            layer.zero_grads()

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {
            f"{lname}.{pname}": value
            for lname, layer in self.layers
            for pname, value in layer.params.items()
        }

    def named_gradients(self) -> dict[str, np.ndarray]:
        return {
            f"{lname}.{pname}": value
            for lname, layer in self.layers
            for pname, value in layer.grads.items()
        }

    def named_buffers(self) -> dict[str, np.ndarray]:
        return {
            f"{lname}.{bname}": value
            for lname, layer in self.layers
            for bname, value in layer.buffers.items()
        }

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        lname, _, pname = name.rpartition(".")
        for candidate, layer in self.layers:
            if candidate == lname and pname in layer.params:
                if layer.params[pname].shape != value.shape:
                    raise ValueError(f"shape mismatch for {name}")
                layer.params[pname] = value.astype(self.dtype)
                return
        raise KeyError(name)

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        lname, _, bname = name.rpartition(".")
        for candidate, layer in self.layers:
            if candidate == lname and bname in layer.buffers:
                layer.buffers[bname] = value.astype(self.dtype)
                return
        raise KeyError(name)

    @property
    def param_count(self) -> int:
        return sum(v.size for v in self.named_parameters().values())

    def predict_proba(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Eval-mode class probabilities, shape (B, n_classes)."""
        x = np.asarray(x)
        out = []
        for start in range(0, x.shape[0], batch_size):
            logits = self.forward(x[start : start + batch_size], train=False)
            out.append(softmax(logits.astype(np.float64)))
        return np.concatenate(out, axis=0)

    def predict_score(self, x: np.ndarray) -> np.ndarray:
        """Probability of the genuine class per item; higher = more genuine."""
        single = np.asarray(x).ndim == 3
        batch = np.asarray(x)[None] if single else np.asarray(x)
        scores = self.predict_proba(batch)[:, GENUINE_CLASS]
        return float(scores[0]) if single else scores

    def arch_dict(self) -> dict:
        return asdict(self.arch)
