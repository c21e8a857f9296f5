"""Differentiable training of Gaussian models."""
from .backward import BackwardResult, GradientBuffer, backward, backward_from_cache
from .config import DEFAULT_LEARNING_RATES, PRESETS, TrainConfig
from .densify import DensifyResult, DensifyStats, densify_and_prune, reset_opacity
from .init import initialize
from .loop import save_checkpoint, train_sequential
from .optim import Adam, adam_step

__all__ = [
    "Adam",
    "BackwardResult",
    "DEFAULT_LEARNING_RATES",
    "DensifyResult",
    "DensifyStats",
    "GradientBuffer",
    "PRESETS",
    "TrainConfig",
    "adam_step",
    "backward",
    "backward_from_cache",
    "densify_and_prune",
    "initialize",
    "reset_opacity",
    "save_checkpoint",
    "train_sequential",
]
