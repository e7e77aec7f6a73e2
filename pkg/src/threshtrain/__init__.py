"""Offline threshold learning for the private-inference engine.

Trains per-layer prune/reduce thresholds (and the toy transformer's
weights) with differentiable soft masks, binarizes them, and exports the
result as the ``<name>.manifest.json`` + ``<name>.blob`` file pair the
engine consumes.  This package talks to the engine only through those
files.
"""

from .data import make_dataset
from .export import export_model
from .masks import mixed_activations, soft_masks, total_loss
from .model import ToyTransformer, hard_forward
from .train import TrainConfig, train_and_export, train_two_phase

__all__ = [
    "make_dataset", "export_model", "mixed_activations", "soft_masks",
    "total_loss", "ToyTransformer", "hard_forward", "TrainConfig",
    "train_and_export", "train_two_phase",
]
