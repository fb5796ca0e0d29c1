"""
Window bookkeeping for (shifted-)window attention over (D, H, W) token grids.

Tokens are laid out channels-last, (B, D, H, W, C). Windows are enumerated in
raster order: d-major, then h, then w.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from einops import rearrange

from sitswin.errors import DimensionError, ParameterError
from sitswin.tensor import ops
from sitswin.tensor.core import Tensor, get_default_dtype

Triple = Tuple[int, int, int]

MASK_VALUE = -1e9

_PARTITION = "b (d wd) (h wh) (w ww) c -> (b d h w) wd wh ww c"
_REVERSE = "(b d h w) wd wh ww c -> b (d wd) (h wh) (w ww) c"


@dataclass(frozen=True)
class WindowSpec:
    """Window extents and the cyclic shift used by the shifted blocks."""

    window: Triple
    shift: Triple = (0, 0, 0)

    def __post_init__(self) -> None:
        if len(self.window) != 3 or len(self.shift) != 3:
            raise DimensionError(f"WindowSpec: window {self.window} and shift {self.shift} must be triples")
        for w, s in zip(self.window, self.shift):
            if w < 1 or not 0 <= s < w:
                raise ParameterError(f"WindowSpec: need 0 <= shift < window per axis, got window {self.window} shift {self.shift}")

    @classmethod
    def shifted(cls, window: Sequence[int], dims: Optional[Sequence[int]] = None) -> "WindowSpec":
        """
        Half-window shift on every axis.

        With `dims` given, axes whose extent equals the window extent keep
        shift 0: a single window already spans them.
        """
        window = tuple(int(w) for w in window)
        shift = tuple(w // 2 for w in window)
        if dims is not None:
            shift = tuple(0 if n == w else s for n, w, s in zip(dims, window, shift))
        return cls(window, shift)

    @property
    def tokens(self) -> int:
        return self.window[0] * self.window[1] * self.window[2]

    @property
    def table_size(self) -> int:
        """Entries in the relative position bias table (per head)."""
        wd, wh, ww = self.window
        return (2 * wd - 1) * (2 * wh - 1) * (2 * ww - 1)

    @property
    def is_shifted(self) -> bool:
        return any(self.shift)

    def window_count(self, dims: Sequence[int]) -> int:
        self.check_divides(dims)
        return int(np.prod([n // w for n, w in zip(dims, self.window)]))

    def check_divides(self, dims: Sequence[int]) -> None:
        if len(dims) != 3 or any(n % w for n, w in zip(dims, self.window)):
            raise DimensionError(f"WindowSpec: window {self.window} does not divide extents {tuple(dims)}")


def _lengths(spec: WindowSpec, dims: Sequence[int]) -> dict:
    wd, wh, ww = spec.window
    return dict(d=dims[0] // wd, h=dims[1] // wh, w=dims[2] // ww, wd=wd, wh=wh, ww=ww)


def window_partition(x: Tensor, spec: WindowSpec) -> Tensor:
    """(B, D, H, W, C) -> (B * nW, wd, wh, ww, C)."""
    if x.ndim != 5:
        raise DimensionError(f"window_partition: expected (B, D, H, W, C), got {x.shape}")
    spec.check_divides(x.shape[1:4])
    return ops.rearrange(x, _PARTITION, **_lengths(spec, x.shape[1:4]))


def window_reverse(windows: Tensor, spec: WindowSpec, dims: Sequence[int]) -> Tensor:
    """Inverse of window_partition; `dims` is (B, D, H, W) of the original grid."""
    if len(dims) != 4:
        raise DimensionError(f"window_reverse: dims must be (B, D, H, W), got {tuple(dims)}")
    b, grid = dims[0], tuple(dims[1:])
    expected = b * spec.window_count(grid)
    if windows.ndim != 5 or windows.shape[0] != expected or tuple(windows.shape[1:4]) != spec.window:
        raise DimensionError(
            f"window_reverse: windows {windows.shape} inconsistent with {expected} windows of {spec.window} for dims {tuple(dims)}"
        )
    return ops.rearrange(windows, _REVERSE, b=b, **_lengths(spec, grid))


def cyclic_shift(x: Tensor, shift: Sequence[int], direction: int = 1) -> Tensor:
    """Roll (B, D, H, W, C) by -shift for direction +1; direction -1 undoes it."""
    if direction not in (1, -1):
        raise ParameterError(f"cyclic_shift: direction must be +1 or -1, got {direction!r}")
    if not any(shift):
        return x
    return ops.roll(x, [-direction * s for s in shift], axes=(1, 2, 3))


def region_labels(dims: Sequence[int], spec: WindowSpec) -> np.ndarray:
    """
    Region id of every voxel of the shifted grid.

    Per axis the grid splits at extent - window and extent - shift into at
    most three bands; an unshifted axis is a single band. Ids combine the
    per-axis bands as (ld * 3 + lh) * 3 + lw.
    """
    axes = []
    for n, w, s in zip(dims, spec.window, spec.shift):
        i = np.arange(n)
        if s == 0:
            axes.append(np.zeros(n, dtype=np.int64))
        else:
            axes.append(np.where(i < n - w, 0, np.where(i < n - s, 1, 2)))
    ld, lh, lw = np.meshgrid(*axes, indexing="ij")
    return (ld * 3 + lh) * 3 + lw


def attention_mask(dims: Sequence[int], spec: WindowSpec) -> Tensor:
    """(nW, t, t) additive mask: 0 within a region, MASK_VALUE across regions."""
    spec.check_divides(dims)
    labels = region_labels(dims, spec)[None, ..., None]
    windows = rearrange(labels, _PARTITION, **_lengths(spec, dims)).reshape(-1, spec.tokens)
    crossing = windows[:, :, None] != windows[:, None, :]
    return Tensor(np.where(crossing, MASK_VALUE, 0.0).astype(get_default_dtype()))


def relative_position_index(spec: WindowSpec) -> Tuple[np.ndarray, int]:
    """(t, t) index into the bias table and the table size, one entry per displacement."""
    wd, wh, ww = spec.window
    coords = np.stack(np.meshgrid(np.arange(wd), np.arange(wh), np.arange(ww), indexing="ij")).reshape(3, -1)
    rel = coords[:, :, None] - coords[:, None, :]
    rel = rel.transpose(1, 2, 0) + np.array([wd - 1, wh - 1, ww - 1])
    index = (rel[..., 0] * (2 * wh - 1) + rel[..., 1]) * (2 * ww - 1) + rel[..., 2]
    return index.astype(np.int64), spec.table_size
