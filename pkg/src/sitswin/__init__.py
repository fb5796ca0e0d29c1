"""Swin UNETR crop segmentation of satellite image time series."""

from sitswin.config import PRESETS, RunConfig, TrainConfig, load_config, parse_config, preset
from sitswin.swin.config import ModelConfig
from sitswin.decoder.model import SegmentationModel, model_forward
from sitswin.data.dataset import Dataset
from sitswin.data.synth import synth_dataset
from sitswin.metrics.confusion import ConfusionMatrix
from sitswin.metrics.evaluate import evaluate
from sitswin.metrics.report import format_report
from sitswin.train.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from sitswin.train.fit import fit

__all__ = [
    "PRESETS",
    "RunConfig",
    "TrainConfig",
    "load_config",
    "parse_config",
    "preset",
    "ModelConfig",
    "SegmentationModel",
    "model_forward",
    "Dataset",
    "synth_dataset",
    "ConfusionMatrix",
    "evaluate",
    "format_report",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "fit",
]
