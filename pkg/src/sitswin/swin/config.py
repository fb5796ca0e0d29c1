from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Tuple

from sitswin.errors import ConfigError

Triple = Tuple[int, int, int]

STAGES = 3
TOTAL_BLOCKS = 6
TIME_MULTIPLE = 16
SPATIAL_MULTIPLE = 16


@dataclass(frozen=True)
class ModelConfig:
    """
    Architectural hyperparameters of the segmentation model.

    Defaults describe the Munich-style setup: 13 bands, 18 classes, 32
    acquisitions on 48x48 tiles, three encoder stages of two blocks each.
    Every shape constraint of the architecture is checked on construction.
    """

    in_channels: int = 13
    num_classes: int = 18
    time_steps: int = 32
    height: int = 48
    width: int = 48
    patch_size: Triple = (2, 2, 2)
    embed_dim: int = 48
    depths: Triple = (2, 2, 2)
    num_heads: Triple = (3, 6, 12)
    window: Triple = (2, 3, 3)
    mlp_ratio: float = 4.0
    attn_drop: float = 0.0
    proj_drop: float = 0.0

    def __post_init__(self) -> None:
        for name in ("in_channels", "num_classes", "time_steps", "height", "width", "embed_dim"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"ModelConfig: {name} must be a positive int, got {value!r}", key=name)
        if self.num_classes < 2:
            raise ConfigError(f"ModelConfig: num_classes must be >= 2, got {self.num_classes}", key="num_classes")
        if self.num_classes > 255:
            raise ConfigError(f"ModelConfig: num_classes must fit below the ignore id 255, got {self.num_classes}", key="num_classes")
        if self.time_steps % TIME_MULTIPLE:
            raise ConfigError(
                f"ModelConfig: time_steps must be a multiple of {TIME_MULTIPLE}, got {self.time_steps}", key="time_steps"
            )
        for name in ("height", "width"):
            if getattr(self, name) % SPATIAL_MULTIPLE:
                raise ConfigError(
                    f"ModelConfig: {name} must be divisible by {SPATIAL_MULTIPLE}, got {getattr(self, name)}", key=name
                )
        for name in ("patch_size", "depths", "num_heads", "window"):
            value = getattr(self, name)
            if len(value) != 3 or any(not isinstance(v, int) or v < 0 for v in value):
                raise ConfigError(f"ModelConfig: {name} must be three non-negative ints, got {value!r}", key=name)
        if self.patch_size != (2, 2, 2):
            raise ConfigError(f"ModelConfig: patch_size must be (2, 2, 2), got {self.patch_size}", key="patch_size")
        if sum(self.depths) != TOTAL_BLOCKS:
            raise ConfigError(
                f"ModelConfig: depths must add up to {TOTAL_BLOCKS} transformer blocks, got {self.depths}", key="depths"
            )
        if min(self.window) < 1:
            raise ConfigError(f"ModelConfig: window extents must be >= 1, got {self.window}", key="window")
        for stage in range(STAGES):
            heads, dim = self.num_heads[stage], self.stage_channels(stage)
            if heads < 1 or dim % heads:
                raise ConfigError(
                    f"ModelConfig: stage {stage + 1} width {dim} is not divisible by {heads} heads", key="num_heads"
                )
            dims = self.stage_dims(stage)
            if any(n % w for n, w in zip(dims, self.window)):
                raise ConfigError(
                    f"ModelConfig: window {self.window} does not divide stage {stage + 1} extents {dims}", key="window"
                )
        if self.mlp_ratio <= 0:
            raise ConfigError(f"ModelConfig: mlp_ratio must be > 0, got {self.mlp_ratio}", key="mlp_ratio")
        for name in ("attn_drop", "proj_drop"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"ModelConfig: {name} must be in [0, 1), got {rate}", key=name)

    # ---- Derived geometry ----

    def stage_dims(self, stage: int) -> Triple:
        """(D, H, W) token extents seen by encoder stage 0, 1 or 2; stage 3 is the bottleneck."""
        factor = 2 ** stage
        return (
            self.time_steps // self.patch_size[0] // factor,
            self.height // self.patch_size[1] // factor,
            self.width // self.patch_size[2] // factor,
        )

    def stage_channels(self, stage: int) -> int:
        return self.embed_dim * 2 ** stage

    @property
    def bottleneck_dims(self) -> Triple:
        return self.stage_dims(STAGES)

    @property
    def input_shape(self) -> Tuple[int, int, int, int]:
        """(C, T, H, W) of one sample."""
        return (self.in_channels, self.time_steps, self.height, self.width)

    @classmethod
    def field_names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))
