"""
Full segmentation network: Swin encoder plus a convolutional decoder.

Decoder widths halve at every level (8E -> 4E -> 2E -> E -> E/2 for embed
width E). Each skip passes through its own residual block before being
concatenated with the upsampled deeper features; the raw input gets a
residual block at full resolution. Time stays a spatial axis all the way up
and is folded into channels only by the head.
"""

from __future__ import annotations

import logging
from typing import Union

import numpy as np

from sitswin.decoder.blocks import ResidualBlock, TemporalCollapseHead, UpConcat
from sitswin.errors import DimensionError
from sitswin.swin.config import ModelConfig
from sitswin.swin.encoder import SwinEncoder
from sitswin.tensor import ops
from sitswin.tensor.core import Tensor, no_grad
from sitswin.tensor.nn import Module

logger = logging.getLogger(__name__)


class SegmentationModel(Module):
    """(B, C, T, H, W) reflectances -> (B, K, H, W) class logits."""

    def __init__(self, cfg: ModelConfig, seed: int = 0) -> None:
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        e = cfg.embed_dim
        self.encoder = SwinEncoder(cfg, rng)
        self.input_block = ResidualBlock(cfg.in_channels, e // 2, rng)
        self.skip_blocks = [ResidualBlock(cfg.stage_channels(s), cfg.stage_channels(s), rng) for s in range(3)]
        self.up8 = UpConcat(8 * e, 4 * e, rng)
        self.up4 = UpConcat(4 * e, 2 * e, rng)
        self.up2 = UpConcat(2 * e, e, rng)
        self.up1 = UpConcat(e, e // 2, rng)
        self.head = TemporalCollapseHead(e // 2, cfg.time_steps, cfg.num_classes, rng)
        logger.debug("SegmentationModel: %d parameters for %s", self.parameter_count(), cfg)

    def forward(self, x: Tensor) -> Tensor:
        features = self.encoder(x)
        skip2, skip4, skip8 = (block(s) for block, s in zip(self.skip_blocks, features.skips))
        h = self.up8(features.bottleneck, skip8)
        h = self.up4(h, skip4)
        h = self.up2(h, skip2)
        h = self.up1(h, self.input_block(x))
        return self.head(h)

    def predict(self, x: Union[Tensor, np.ndarray]) -> np.ndarray:
        """Per-pixel argmax class ids (B, H, W), without recording a graph."""
        if self.training:
            self.eval()
            try:
                return self.predict(x)
            finally:
                self.train()
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x))
        with no_grad():
            logits = self(x)
        return ops.argmax(logits, axis=1).astype(np.uint8)


def model_forward(x: Tensor, model: SegmentationModel) -> Tensor:
    """Logits of `model` for a (B, C, T, H, W) batch."""
    if x.ndim != 5:
        raise DimensionError(f"model_forward: expected (B, C, T, H, W), got {x.shape}")
    return model(x)
