"""The face network, its contrastive training loop, embeddings and verification metrics."""

from .evaluation import best_threshold, evaluate
from .loss import DEFAULT_MARGIN, contrastive_loss, euclidean_distance, pair_loss
from .network import (
    EMBEDDING_DIM,
    GOLDEN_CNN,
    GOLDEN_HEAD,
    SiameseNetwork,
    embed,
    embed_batch,
    load_checkpoint,
    save_checkpoint,
)
from .training import EpochReport, TrainConfig, overfit_batch, train

build_network = SiameseNetwork.build

__all__ = [
    "DEFAULT_MARGIN",
    "EMBEDDING_DIM",
    "GOLDEN_CNN",
    "GOLDEN_HEAD",
    "EpochReport",
    "SiameseNetwork",
    "TrainConfig",
    "best_threshold",
    "build_network",
    "contrastive_loss",
    "embed",
    "embed_batch",
    "euclidean_distance",
    "evaluate",
    "load_checkpoint",
    "overfit_batch",
    "pair_loss",
    "save_checkpoint",
    "train",
]
