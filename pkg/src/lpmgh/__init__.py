"""Locality-preserving multiview graph hashing.

Learns compact binary codes from several feature views of the same samples
by combining anchor-graph locality preservation with quantization loss and
self-weighted views, and ranks them by Hamming distance.
"""

from .dataset import MultiviewDataset, NormStats, SplitSpec, load_features, normalize_view, split, synth_multiview
from .retrieval import map_score, pack, pr_curve, rank
from .trainer import HashModel, TrainConfig, TrainReport, encode, train

__version__ = "0.1.0"

__all__ = [
    "HashModel",
    "MultiviewDataset",
    "NormStats",
    "SplitSpec",
    "TrainConfig",
    "TrainReport",
    "encode",
    "load_features",
    "map_score",
    "normalize_view",
    "pack",
    "pr_curve",
    "rank",
    "split",
    "synth_multiview",
    "train",
]
