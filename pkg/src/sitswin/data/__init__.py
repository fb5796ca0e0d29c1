"""Tiles, dataset directories, augmentation and the synthetic generator."""

from sitswin.data.rng import SplitMix64
from sitswin.data.tile import (
    IGNORE_ID,
    SitsTile,
    augment_flip,
    batch_tiles,
    flip_tile,
    load_tile,
    normalize_bands,
    save_tile,
    temporal_resample,
)
from sitswin.data.dataset import ClassInfo, Dataset, DatasetIndex, read_classes, read_splits
from sitswin.data.synth import class_profiles, split_counts, synth_dataset

__all__ = [
    "SplitMix64",
    "IGNORE_ID",
    "SitsTile",
    "augment_flip",
    "batch_tiles",
    "flip_tile",
    "load_tile",
    "normalize_bands",
    "save_tile",
    "temporal_resample",
    "ClassInfo",
    "Dataset",
    "DatasetIndex",
    "read_classes",
    "read_splits",
    "class_profiles",
    "split_counts",
    "synth_dataset",
]
