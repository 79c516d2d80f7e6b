"""Training loop: Adam/SGD, MixUp augmentation, deterministic seeding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericsError
from .model import ArchConfig, ReplayNet
from .layers import softmax_cross_entropy

OPTIMIZERS = ("adam", "sgd")
PRECISIONS = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    mixup_alpha: float = 0.05
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.mixup_alpha > 0:
            raise ValueError(f"mixup_alpha must be > 0, got {self.mixup_alpha}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {tuple(PRECISIONS)}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


def one_hot(labels: np.ndarray, n_classes: int = 2, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    out = np.zeros((labels.size, n_classes), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out


def sample_beta(alpha: float, rng: np.random.Generator) -> float:
    """Beta(alpha, alpha) draw built from two gamma draws."""
    g1 = rng.standard_gamma(alpha)
    g2 = rng.standard_gamma(alpha)
    total = g1 + g2
    return float(g1 / total) if total > 0 else 0.5


def mixup(
    inputs_a: np.ndarray,
    labels_a: np.ndarray,
    inputs_b: np.ndarray,
    labels_b: np.ndarray,
    alpha: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Convex combination of two batches with lambda ~ Beta(alpha, alpha).

    Labels must already be soft (rows summing to 1); the mixed labels stay
    soft.  Returns (mixed inputs, mixed labels, lambda).
    """
    lam = sample_beta(alpha, rng)
    mixed_x = lam * inputs_a + (1.0 - lam) * inputs_b
    mixed_y = lam * labels_a + (1.0 - lam) * labels_b
    return mixed_x, mixed_y, lam


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            mhat = self.m[name] / b1c
            vhat = self.v[name] / b2c
            p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)


class Sgd:
    def __init__(self, params: dict[str, np.ndarray], lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            p -= (self.lr * grads[name]).astype(p.dtype)


@dataclass
class TrainResult:
    net: ReplayNet
    history: list[dict] = field(default_factory=list)


def accuracy(net: ReplayNet, maps: np.ndarray, labels: np.ndarray) -> float:
    predictions = net.predict_proba(maps).argmax(axis=1)
    return float((predictions == np.asarray(labels)).mean())


def train(
    maps: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig | None = None,
    val_maps: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
    arch: ArchConfig | None = None,
) -> TrainResult:
    """Train the classifier on labeled maps; deterministic given the seed.

    Every batch is mixed with a shuffled copy of itself (MixUp) before the
    forward pass.  History records per-epoch mean training loss, training
    accuracy, and validation accuracy when a validation set is given.
    Raises NumericsError if the loss goes non-finite and ValueError for a
    single-class dataset.
    """
    cfg = config or TrainConfig()
    maps = np.asarray(maps)
    labels = np.asarray(labels, dtype=np.int64)
    if maps.ndim != 4 or maps.shape[0] != labels.size or maps.shape[0] == 0:
        raise ValueError(f"maps (n, K, A, E) and labels (n,) required, got {maps.shape}")
    if np.unique(labels).size < 2:
        raise ValueError("training data must contain both classes")
    dtype = PRECISIONS[cfg.precision]
    rng = np.random.default_rng(cfg.seed)
    if arch is None:
        arch = ArchConfig(in_bands=maps.shape[1], in_shape=maps.shape[2:])
    net = ReplayNet(arch, seed=rng, dtype=dtype)
    maps = maps.astype(dtype)
    targets = one_hot(labels, arch.n_classes, dtype=dtype)
    params = net.named_parameters()
    optimizer = Adam(params, cfg.learning_rate) if cfg.optimizer == "adam" else Sgd(params, cfg.learning_rate)

    history: list[dict] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(maps.shape[0])
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, order.size, cfg.batch_size):
            batch_idx = order[start : start + cfg.batch_size]
            x, y = maps[batch_idx], targets[batch_idx]
            pair = rng.permutation(batch_idx.size)
            x, y, _ = mixup(x, y, x[pair], y[pair], cfg.mixup_alpha, rng)
            net.zero_grads()
            logits = net.forward(x, train=True)
            loss, grad = softmax_cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise NumericsError(
                    f"non-finite loss at epoch {epoch + 1}, batch {n_batches + 1}; "
                    "try a lower learning rate"
                )
            net.backward(grad)
            optimizer.step(net.named_gradients())
            epoch_loss += loss
            n_batches += 1
        record = {
            "epoch": epoch + 1,
            "loss": epoch_loss / n_batches,
            "train_accuracy": accuracy(net, maps, labels),
        }
        if val_maps is not None and val_labels is not None:
            record["val_accuracy"] = accuracy(net, val_maps, val_labels)
        history.append(record)
    return TrainResult(net=net, history=history)
