"""Convolutional decoder and the end-to-end segmentation model."""

from sitswin.decoder.blocks import ResidualBlock, TemporalCollapseHead, UpConcat
from sitswin.decoder.model import SegmentationModel, model_forward

__all__ = [
    "ResidualBlock",
    "TemporalCollapseHead",
    "UpConcat",
    "SegmentationModel",
    "model_forward",
]
