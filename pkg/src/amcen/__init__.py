"""Two-stage temporal knowledge graph extrapolation.

Queries are first classified as recurring or new events; candidates are then
ranked inside the matching (historical or non-historical) entity pool using
structural message passing, windowed attentive pooling, and global frequency
features.
"""

from .config import RunConfig, TrainConfig
from .data import (SnapshotSequence, StatsReport, TKGDataset, Vocabulary,
                   augment_inverse, build_vocabulary, dataset_statistics,
                   load_dataset, load_quadruples, save_quadruples,
                   split_snapshots)
from .history import FrequencyIndex
from .network import AmcenModel, ModelState, build_model

__all__ = [
    "AmcenModel", "FrequencyIndex", "ModelState", "RunConfig",
    "SnapshotSequence", "StatsReport", "TKGDataset", "TrainConfig",
    "Vocabulary", "augment_inverse", "build_model", "build_vocabulary",
    "dataset_statistics", "load_dataset", "load_quadruples",
    "save_quadruples", "split_snapshots",
]

__version__ = "0.1.0"
