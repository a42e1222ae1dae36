"""Small reverse-mode engine: LSTM and FC layers, L2 loss, Adam with decoupled decay."""

from .checkpoint import load_networks, save_networks
from .losses import l2_loss
from .network import Network, backward, forward_sequence
from .optim import Adam, NonFiniteGradientError, OptimConfig, adam_step
from .spec import (
    FC,
    LSTM,
    NetParams,
    NetSpec,
    ReLU,
    ShapeMismatchError,
    Tanh,
    init_params,
    seed_rng,
    zero_params,
)

__all__ = [
    "Adam", "FC", "LSTM", "NetParams", "NetSpec", "Network", "NonFiniteGradientError",
    "OptimConfig", "ReLU", "ShapeMismatchError", "Tanh", "adam_step", "backward",
    "forward_sequence", "init_params", "l2_loss", "load_networks", "save_networks",
    "seed_rng", "zero_params",
]
