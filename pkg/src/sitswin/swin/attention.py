from __future__ import annotations

from typing import Optional

import numpy as np

from sitswin.errors import ConfigError, DimensionError
from sitswin.swin.windows import WindowSpec, relative_position_index
from sitswin.tensor import init, ops
from sitswin.tensor.core import Tensor
from sitswin.tensor.nn import Dropout, Linear, Module, Parameter


class WindowAttention(Module):
    """
    Multi-head self-attention inside each window, with a learned relative
    position bias per head.

    Input is (nW * B, t, C) with t tokens per window; an optional additive
    mask of shape (nW, t, t) is broadcast over the batch and the heads.
    """

    def __init__(
        self,
        dim: int,
        num_heads: int,
        spec: WindowSpec,
        rng: np.random.Generator,
        attn_drop: float = 0.0,
        proj_drop: float = 0.0,
    ) -> None:
        if num_heads < 1 or dim % num_heads:
            raise ConfigError(f"WindowAttention: dim {dim} is not divisible by {num_heads} heads", key="num_heads")
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim ** -0.5
        self.spec = spec
        self._index, table_size = relative_position_index(spec)
        self.bias_table = Parameter(init.trunc_normal((table_size, num_heads), rng))
        self.qkv = Linear(dim, 3 * dim, rng)
        self.attn_drop = Dropout(attn_drop, rng)
        self.proj = Linear(dim, dim, rng)
        self.proj_drop = Dropout(proj_drop, rng)

    def position_bias(self) -> Tensor:
        """(heads, t, t) bias gathered from the table."""
        t = self.spec.tokens
        rows = ops.take_rows(self.bias_table, self._index.reshape(-1))
        return ops.rearrange(rows, "(i j) h -> h i j", i=t, j=t)

    def forward(self, x: Tensor, mask: Optional[Tensor] = None) -> Tensor:
        n, t, c = x.shape
        if t != self.spec.tokens or c != self.dim:
            raise DimensionError(f"WindowAttention.forward: expected (*, {self.spec.tokens}, {self.dim}) tokens, got {x.shape}")
        qkv = ops.rearrange(self.qkv(x), "n t (k h d) -> k n h t d", k=3, h=self.num_heads, d=self.head_dim)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ops.matmul(q * self.scale, k.permute(0, 1, 3, 2))
        scores = scores + self.position_bias()
        if mask is not None:
            windows = mask.shape[0]
            if n % windows or mask.shape[1:] != (t, t):
                raise DimensionError(f"WindowAttention.forward: mask {mask.shape} does not fit {n} windows of {t} tokens")
            scores = scores.reshape(n // windows, windows, self.num_heads, t, t) + mask.reshape(1, windows, 1, t, t)
            scores = scores.reshape(n, self.num_heads, t, t)
        attn = self.attn_drop(ops.softmax_last(scores))
        out = ops.rearrange(ops.matmul(attn, v), "n h t d -> n t (h d)", h=self.num_heads, d=self.head_dim)
        return self.proj_drop(self.proj(out))
