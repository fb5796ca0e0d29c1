from __future__ import annotations

import numpy as np

from sitswin.errors import DimensionError
from sitswin.tensor import ops
from sitswin.tensor.core import Tensor
from sitswin.tensor.nn import Conv3d, ConvTranspose3d, Linear, Module

NORM_EPS = 1e-5
LEAKY_SLOPE = 0.01


class ResidualBlock(Module):
    """
    Two conv3x3x3 -> instance norm -> leaky ReLU layers with a 1x1x1-projected
    residual. Spatial extents are preserved.
    """

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator) -> None:
        self.conv1 = Conv3d(in_channels, out_channels, 3, rng, padding=1, bias=False)
        self.conv2 = Conv3d(out_channels, out_channels, 3, rng, padding=1, bias=False)
        self.conv3 = Conv3d(in_channels, out_channels, 1, rng, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        h = ops.leaky_relu(ops.instance_norm(self.conv1(x), NORM_EPS), LEAKY_SLOPE)
        h = ops.instance_norm(self.conv2(h), NORM_EPS)
        residual = ops.instance_norm(self.conv3(x), NORM_EPS)
        return ops.leaky_relu(h + residual, LEAKY_SLOPE)


class UpConcat(Module):
    """Transposed-conv upsample by 2, concatenate the skip on channels, residual block."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator) -> None:
        self.up = ConvTranspose3d(in_channels, out_channels, 2, rng)
        self.block = ResidualBlock(2 * out_channels, out_channels, rng)

    def forward(self, low: Tensor, skip: Tensor) -> Tensor:
        if low.ndim != 5 or skip.ndim != 5 or tuple(2 * n for n in low.shape[2:]) != tuple(skip.shape[2:]):
            raise DimensionError(f"UpConcat.forward: {low.shape} is not half the extents of skip {skip.shape}")
        up = self.up(low)
        if up.shape[1] != skip.shape[1]:
            raise DimensionError(f"UpConcat.forward: upsampled {up.shape} and skip {skip.shape} differ in channels")
        return self.block(ops.concat([up, skip], axis=1))


class TemporalCollapseHead(Module):
    """Fold time into channels and project per pixel: (B, F, T, H, W) -> (B, K, H, W)."""

    def __init__(self, channels: int, time_steps: int, num_classes: int, rng: np.random.Generator) -> None:
        self.time_steps = time_steps
        self.proj = Linear(channels * time_steps, num_classes, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 5 or x.shape[2] != self.time_steps:
            raise DimensionError(f"TemporalCollapseHead.forward: expected (B, F, {self.time_steps}, H, W), got {x.shape}")
        pixels = ops.rearrange(x, "b f t h w -> b h w (f t)", t=self.time_steps)
        return ops.rearrange(self.proj(pixels), "b h w k -> b k h w")
