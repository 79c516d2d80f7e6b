"""From-scratch CNN: layers, model, training, gradient checks, checkpoints."""

from .layers import (
    batch_norm,
    dw_separable_conv2d,
    elu,
    max_pool_2x2,
    softmax,
    softmax_cross_entropy,
)
from .model import ArchConfig, GENUINE_CLASS, ReplayNet, stock_arch
from .train import TrainConfig, TrainResult, accuracy, mixup, one_hot, sample_beta, train
from .gradcheck import (
    analytic_gradients,
    finite_difference_gradients,
    grad_check,
    gradient_errors,
    make_reduced_net,
    reduced_arch,
)
from .checkpoint import (
    load_checkpoint,
    map_preprocessing,
    preprocessing_metadata,
    require_matching_preprocessing,
    save_checkpoint,
    score_maps,
)

__all__ = [
    "ArchConfig",
    "GENUINE_CLASS",
    "ReplayNet",
    "TrainConfig",
    "TrainResult",
    "accuracy",
    "analytic_gradients",
    "batch_norm",
    "dw_separable_conv2d",
    "elu",
    "finite_difference_gradients",
    "grad_check",
    "gradient_errors",
    "load_checkpoint",
    "make_reduced_net",
    "map_preprocessing",
    "max_pool_2x2",
    "mixup",
    "one_hot",
    "preprocessing_metadata",
    "reduced_arch",
    "require_matching_preprocessing",
    "sample_beta",
    "save_checkpoint",
    "score_maps",
    "softmax",
    "softmax_cross_entropy",
    "stock_arch",
    "train",
]
