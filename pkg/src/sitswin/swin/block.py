from __future__ import annotations

from typing import Sequence

import numpy as np

from sitswin.errors import DimensionError
from sitswin.swin.attention import WindowAttention
from sitswin.swin.windows import WindowSpec, attention_mask, cyclic_shift, window_partition, window_reverse
from sitswin.tensor import ops
from sitswin.tensor.core import Tensor
from sitswin.tensor.nn import Conv3d, Dropout, LayerNorm, Linear, Module


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator, drop: float = 0.0) -> None:
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)
        self.drop = Dropout(drop, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.drop(self.fc2(self.drop(ops.gelu(self.fc1(x)))))


class SwinBlock(Module):
    """
    Pre-norm transformer block over a fixed (D, H, W) token grid.

    x + attention(LN(x)), then + MLP(LN(.)). A shifted block rolls the grid
    by the window shift before partitioning, masks attention across the
    wrapped regions and rolls back afterwards. The mask depends only on the
    grid and the window, so it is built once here.
    """

    def __init__(
        self,
        dim: int,
        num_heads: int,
        dims: Sequence[int],
        window: Sequence[int],
        shifted: bool,
        rng: np.random.Generator,
        mlp_ratio: float = 4.0,
        attn_drop: float = 0.0,
        proj_drop: float = 0.0,
    ) -> None:
        self.dims = tuple(dims)
        self.spec = WindowSpec.shifted(window, self.dims) if shifted else WindowSpec(tuple(window))
        self.spec.check_divides(self.dims)
        self.shifted = shifted
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, num_heads, self.spec, rng, attn_drop, proj_drop)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio), rng, proj_drop)
        self._mask = attention_mask(self.dims, self.spec) if self.spec.is_shifted else None

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 5 or tuple(x.shape[1:4]) != self.dims:
            raise DimensionError(f"SwinBlock.forward: expected (B, {', '.join(map(str, self.dims))}, C), got {x.shape}")
        b, c = x.shape[0], x.shape[4]
        h = cyclic_shift(self.norm1(x), self.spec.shift, +1)
        windows = window_partition(h, self.spec).reshape(-1, self.spec.tokens, c)
        windows = self.attn(windows, self._mask).reshape((-1,) + self.spec.window + (c,))
        h = cyclic_shift(window_reverse(windows, self.spec, (b,) + self.dims), self.spec.shift, -1)
        x = x + h
        return x + self.mlp(self.norm2(x))


class PatchMerging(Module):
    """(B, D, H, W, C) -> (B, D/2, H/2, W/2, 2C): concat each 2x2x2 cell, LN, project."""

    def __init__(self, dim: int, rng: np.random.Generator) -> None:
        self.norm = LayerNorm(8 * dim)
        self.reduction = Linear(8 * dim, 2 * dim, rng, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 5 or any(n % 2 for n in x.shape[1:4]):
            raise DimensionError(f"PatchMerging.forward: token grid must be even on every axis, got {x.shape}")
        # cell offsets vary d fastest, then h, then w
        cells = ops.rearrange(x, "b (d pd) (h ph) (w pw) c -> b d h w (pw ph pd c)", pd=2, ph=2, pw=2)
        return self.reduction(self.norm(cells))


class PatchEmbed(Module):
    """Non-overlapping patches projected to embed_dim: (B, C, T, H, W) -> (B, E, T/p, H/p, W/p)."""

    def __init__(self, in_channels: int, embed_dim: int, patch_size: Sequence[int], rng: np.random.Generator) -> None:
        self.patch_size = tuple(patch_size)
        self.proj = Conv3d(in_channels, embed_dim, self.patch_size, rng, stride=self.patch_size)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 5 or any(n % p for n, p in zip(x.shape[2:], self.patch_size)):
            raise DimensionError(f"PatchEmbed.forward: extents of {x.shape} not divisible by patch {self.patch_size}")
        return self.proj(x)
