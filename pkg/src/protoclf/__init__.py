"""Interpretable prototype classifier over frozen text embeddings.

The engine learns prototype vectors in an external encoder's embedding
space, classifies by similarity to those prototypes through a class-masked
nonnegative linear head, explains every prediction by its most important
prototypes, and accepts typed human edits to the prototype set while
training runs.
"""

from .errors import ProtoclfError
from .kernels import BACKEND as KERNEL_BACKEND
from .losses import InteractionTarget, LossWeights, total_loss
from .model import (
    ClassifierHead,
    ProtoModel,
    PrototypeSet,
    explain,
    forward,
    load_checkpoint,
    project,
    save_checkpoint,
)
from .patching import SelectorConfig, similarity
from .store import Dataset, EmbeddedExample, ToyEncoder, load_dataset, write_dataset
from .trainer import TrainConfig, Trainer, balanced_accuracy, lr_at, train

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ClassifierHead",
    "Dataset",
    "EmbeddedExample",
    "InteractionTarget",
    "KERNEL_BACKEND",
    "LossWeights",
    "ProtoModel",
    "ProtoclfError",
    "PrototypeSet",
    "SelectorConfig",
    "ToyEncoder",
    "TrainConfig",
    "Trainer",
    "balanced_accuracy",
    "explain",
    "forward",
    "load_checkpoint",
    "load_dataset",
    "lr_at",
    "project",
    "save_checkpoint",
    "similarity",
    "total_loss",
    "train",
    "write_dataset",
]
