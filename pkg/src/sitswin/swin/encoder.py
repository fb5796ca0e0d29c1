"""
Three-stage spatiotemporal Swin encoder.

patch embed -> stage 1 -> merge -> stage 2 -> merge -> stage 3 -> merge.
Each stage runs a W-MSA block followed by an SW-MSA block. The stage outputs
are the /2, /4 and /8 skips; the last merge gives the /16 bottleneck.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from sitswin.errors import DimensionError
from sitswin.swin.block import PatchEmbed, PatchMerging, SwinBlock
from sitswin.swin.config import STAGES, ModelConfig
from sitswin.tensor import ops
from sitswin.tensor.core import Tensor
from sitswin.tensor.nn import Module

logger = logging.getLogger(__name__)

_TO_TOKENS = "b c d h w -> b d h w c"
_TO_CHANNELS = "b d h w c -> b c d h w"


@dataclass
class EncoderOutput:
    """Channels-first feature maps at /2, /4, /8 and /16."""

    skip2: Tensor
    skip4: Tensor
    skip8: Tensor
    bottleneck: Tensor
    blocks_executed: int = 0

    @property
    def skips(self) -> List[Tensor]:
        return [self.skip2, self.skip4, self.skip8]


class SwinStage(Module):
    """Blocks alternating W-MSA and SW-MSA at one resolution, then a patch merge."""

    def __init__(
        self,
        dim: int,
        depth: int,
        num_heads: int,
        dims: Sequence[int],
        window: Sequence[int],
        rng: np.random.Generator,
        mlp_ratio: float = 4.0,
        attn_drop: float = 0.0,
        proj_drop: float = 0.0,
    ) -> None:
        self.blocks = [
            SwinBlock(dim, num_heads, dims, window, i % 2 == 1, rng, mlp_ratio, attn_drop, proj_drop)
            for i in range(depth)
        ]
        self.downsample = PatchMerging(dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        for block in self.blocks:
            x = block(x)
        return x


class SwinEncoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator) -> None:
        self.cfg = cfg
        self.patch_embed = PatchEmbed(cfg.in_channels, cfg.embed_dim, cfg.patch_size, rng)
        self.stages = [
            SwinStage(
                cfg.stage_channels(s),
                cfg.depths[s],
                cfg.num_heads[s],
                cfg.stage_dims(s),
                cfg.window,
                rng,
                cfg.mlp_ratio,
                cfg.attn_drop,
                cfg.proj_drop,
            )
            for s in range(STAGES)
        ]

    @property
    def block_count(self) -> int:
        return sum(len(stage.blocks) for stage in self.stages)

    def forward(self, x: Tensor) -> EncoderOutput:
        expected = self.cfg.input_shape
        if x.ndim != 5 or tuple(x.shape[1:]) != expected:
            raise DimensionError(f"SwinEncoder.forward: expected (B, {', '.join(map(str, expected))}), got {x.shape}")
        tokens = ops.rearrange(self.patch_embed(x), _TO_TOKENS)
        skips = []
        executed = 0
        for stage in self.stages:
            tokens = stage(tokens)
            executed += len(stage.blocks)
            skips.append(ops.rearrange(tokens, _TO_CHANNELS))
            tokens = stage.downsample(tokens)
        bottleneck = ops.rearrange(tokens, _TO_CHANNELS)
        logger.debug("encoder: %d blocks, bottleneck %s", executed, bottleneck.shape)
        return EncoderOutput(*skips, bottleneck=bottleneck, blocks_executed=executed)


def encoder_forward(x: Tensor, encoder: SwinEncoder) -> EncoderOutput:
    """Run the encoder on a (B, C, T, H, W) batch."""
    return encoder(x)
