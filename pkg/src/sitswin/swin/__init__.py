"""Spatiotemporal shifted-window transformer encoder."""

from sitswin.swin.config import ModelConfig
from sitswin.swin.windows import (
    MASK_VALUE,
    WindowSpec,
    attention_mask,
    cyclic_shift,
    region_labels,
    relative_position_index,
    window_partition,
    window_reverse,
)
from sitswin.swin.attention import WindowAttention
from sitswin.swin.block import Mlp, PatchEmbed, PatchMerging, SwinBlock
from sitswin.swin.encoder import EncoderOutput, SwinEncoder, SwinStage, encoder_forward

__all__ = [
    "ModelConfig",
    "MASK_VALUE",
    "WindowSpec",
    "attention_mask",
    "cyclic_shift",
    "region_labels",
    "relative_position_index",
    "window_partition",
    "window_reverse",
    "WindowAttention",
    "Mlp",
    "PatchEmbed",
    "PatchMerging",
    "SwinBlock",
    "EncoderOutput",
    "SwinEncoder",
    "SwinStage",
    "encoder_forward",
]
