"""Minimal trainable convolutional network: forward, backward, SGD, checkpoints."""

from .model import Network, softmax
from .train import EpochStats, TrainConfig, evaluate, lr_for_epoch, train
from .gradcheck import gradient_check
from .checkpoint import load_model, load_state, save_model, save_state

__all__ = [
    "Network",
    "softmax",
    "TrainConfig",
    "EpochStats",
    "train",
    "evaluate",
    "lr_for_epoch",
    "gradient_check",
    "save_state",
    "load_state",
    "save_model",
    "load_model",
]
