"""Numpy tensor engine: layers, sequential networks, Adam and checkpoints."""

from .checkpoint import MAGIC as CHECKPOINT_MAGIC, load_checkpoint, save_checkpoint
from .gradcheck import check_layer, check_network, numerical_grad, rel_error
from .layers import (
    DEFAULT_INIT_STD,
    AvgPool,
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    GlobalAvgPool,
    Layer,
    MixtureOfExperts,
    Parameter,
    ReLU,
    Softmax,
    init_normal,
    softmax,
    softmax_backward,
)
from .network import (
    LAYER_KINDS,
    LayerSpec,
    NetworkSpec,
    Sequential,
    StateMixin,
    avg_pool,
    bn,
    conv,
    dropout,
    fc,
    global_avg_pool,
    moe,
    relu,
    softmax_layer,
)
from .optim import Adam, adam_step

__all__ = [
    "CHECKPOINT_MAGIC", "load_checkpoint", "save_checkpoint",
    "check_layer", "check_network", "numerical_grad", "rel_error",
    "DEFAULT_INIT_STD", "AvgPool", "BatchNorm", "Conv2D", "Dense", "Dropout", "GlobalAvgPool",
    "Layer", "MixtureOfExperts", "Parameter", "ReLU", "Softmax", "init_normal", "softmax",
    "softmax_backward", "LAYER_KINDS", "LayerSpec", "NetworkSpec", "Sequential", "StateMixin", "avg_pool", "bn",
    "conv", "dropout", "fc", "global_avg_pool", "moe", "relu", "softmax_layer", "Adam", "adam_step",
]
