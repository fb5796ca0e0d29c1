"""
SITS tiles and the `.sit` binary format.

Layout, little-endian: magic "SIT1"; u16 T, C, H, W, K; u16 reserved = 0
(16 bytes in all); T*C*H*W float32 values, t-major then c, h, w; H*W uint8
labels, row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
from einops import rearrange

from sitswin.data.rng import SplitMix64
from sitswin.errors import ConfigError, DimensionError, FormatError, ParameterError, RangeError

PathLike = Union[str, Path]

MAGIC = b"SIT1"
HEADER = struct.Struct("<4s6H")
IGNORE_ID = 255
REFLECTANCE_SCALE = 10000.0
TIME_MULTIPLE = 16


@dataclass(frozen=True, eq=False)
class SitsTile:
    """values (T, C, H, W) float32 in [0, 1]; labels (H, W) uint8, 255 = ignore."""

    values: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if values.ndim != 4:
            raise DimensionError(f"SitsTile: values must be (T, C, H, W), got {values.shape}")
        if labels.shape != values.shape[2:]:
            raise DimensionError(f"SitsTile: labels {labels.shape} do not match values {values.shape}")
        if not 1 <= self.num_classes < IGNORE_ID:
            raise RangeError(f"SitsTile: num_classes must be in [1, {IGNORE_ID}), got {self.num_classes}")
        bad = (labels != IGNORE_ID) & (labels >= self.num_classes)
        if bad.any():
            raise RangeError(f"SitsTile: label {int(labels[bad][0])} outside [0, {self.num_classes})")
        if not np.isfinite(values).all():
            raise ParameterError("SitsTile: values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_raw(cls, raw: np.ndarray, labels: np.ndarray, num_classes: int) -> "SitsTile":
        """Build a tile from integer digital numbers, scaling them with normalize_bands."""
        return cls(normalize_bands(raw), labels, num_classes)

    @property
    def time_steps(self) -> int:
        return self.values.shape[0]

    @property
    def bands(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[2]

    @property
    def width(self) -> int:
        return self.values.shape[3]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SitsTile):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.labels, other.labels)
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )


def normalize_bands(raw: np.ndarray) -> np.ndarray:
    """Reflectance digital numbers to [0, 1]: min(raw / 10000, 1)."""
    raw = np.asarray(raw)
    if (raw < 0).any():
        raise ParameterError("normalize_bands: raw reflectances must be >= 0")
    return np.minimum(raw / REFLECTANCE_SCALE, 1.0).astype(np.float32)


# ---- File format ----

def tile_to_bytes(tile: SitsTile) -> bytes:
    t, c, h, w = tile.values.shape
    header = HEADER.pack(MAGIC, t, c, h, w, tile.num_classes, 0)
    return header + tile.values.astype("<f4").tobytes() + tile.labels.tobytes()


def tile_from_bytes(blob: bytes, source: str = "<bytes>") -> SitsTile:
    if len(blob) < HEADER.size:
        raise FormatError(f"load_tile: {source}: truncated header, {len(blob)} bytes at offset 0")
    magic, t, c, h, w, k, reserved = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"load_tile: {source}: bad magic {magic!r} at offset 0")
    if reserved != 0:
        raise FormatError(f"load_tile: {source}: reserved field {reserved} at offset 14 must be 0")
    if min(t, c, h, w) == 0:
        raise FormatError(f"load_tile: {source}: zero extent in header (T={t}, C={c}, H={h}, W={w})")
    count = t * c * h * w
    labels_at = HEADER.size + 4 * count
    end = labels_at + h * w
    if len(blob) < end:
        raise FormatError(f"load_tile: {source}: truncated payload, file ends at offset {len(blob)}, expected {end}")
    if len(blob) > end:
        raise FormatError(f"load_tile: {source}: {len(blob) - end} trailing bytes after offset {end}")
    values = np.frombuffer(blob, dtype="<f4", count=count, offset=HEADER.size).astype(np.float32).reshape(t, c, h, w)
    labels = np.frombuffer(blob, dtype=np.uint8, count=h * w, offset=labels_at).reshape(h, w)
    bad = np.flatnonzero((labels.reshape(-1) != IGNORE_ID) & (labels.reshape(-1) >= k))
    if bad.size:
        raise FormatError(
            f"load_tile: {source}: label {int(labels.reshape(-1)[bad[0]])} outside [0, {k}) at offset {labels_at + int(bad[0])}"
        )
    bad = np.flatnonzero(~np.isfinite(values.reshape(-1)))
    if bad.size:
        raise FormatError(f"load_tile: {source}: non-finite value at offset {HEADER.size + 4 * int(bad[0])}")
    return SitsTile(values, labels, k)


def save_tile(tile: SitsTile, path: PathLike) -> None:
    Path(path).write_bytes(tile_to_bytes(tile))


def load_tile(path: PathLike) -> SitsTile:
    path = Path(path)
    return tile_from_bytes(path.read_bytes(), str(path))


# ---- Transforms ----

def temporal_resample(tile: SitsTile, target_steps: int) -> SitsTile:
    """Select frame floor(k * T / target) for output frame k; no interpolation."""
    if target_steps < 1 or target_steps % TIME_MULTIPLE:
        raise ConfigError(
            f"temporal_resample: target length must be a positive multiple of {TIME_MULTIPLE}, got {target_steps}",
            key="time_steps",
        )
    if tile.time_steps == target_steps:
        return tile
    frames = (np.arange(target_steps) * tile.time_steps) // target_steps
    return SitsTile(tile.values[frames], tile.labels, tile.num_classes)


def flip_tile(tile: SitsTile, vertical: bool, horizontal: bool) -> SitsTile:
    """Mirror along H (vertical) and/or W (horizontal), values and labels alike."""
    values, labels = tile.values, tile.labels
    if vertical:
        values, labels = values[:, :, ::-1, :], labels[::-1, :]
    if horizontal:
        values, labels = values[:, :, :, ::-1], labels[:, ::-1]
    if not (vertical or horizontal):
        return tile
    return SitsTile(values, labels, tile.num_classes)


def augment_flip(tile: SitsTile, rng: SplitMix64) -> SitsTile:
    """Vertical then horizontal flip, each with probability 0.5 from its own draw of `rng`."""
    vertical = rng.next_float() < 0.5
    horizontal = rng.next_float() < 0.5
    return flip_tile(tile, vertical, horizontal)


def batch_tiles(tiles: Sequence[SitsTile]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack tiles into model input (B, C, T, H, W) and labels (B, H, W)."""
    if not tiles:
        raise DimensionError("batch_tiles: no tiles given")
    shapes = {tile.values.shape for tile in tiles}
    if len(shapes) > 1:
        raise DimensionError(f"batch_tiles: tiles disagree in shape: {sorted(shapes)}")
    values = rearrange(np.stack([tile.values for tile in tiles]), "b t c h w -> b c t h w")
    return np.ascontiguousarray(values), np.stack([tile.labels for tile in tiles])
