"""Adversarial fair multi-view clustering."""

from .data import MultiViewDataset, DatasetManifest, load_dataset
from .trainer import TrainConfig, TrainedModel, train, ablate
from .metrics import accuracy, nmi, balance, evaluate

__version__ = "0.1.0"
