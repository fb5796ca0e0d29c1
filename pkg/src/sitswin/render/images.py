"""
Label maps and tiles rendered to RGB arrays, written as binary PPM (P6).

Images are (H, W, 3) uint8 arrays throughout.
"""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
from einops import rearrange

from sitswin.errors import DimensionError, FormatError, PaletteError, RangeError
from sitswin.render.palette import IGNORE_ID, Palette

PathLike = Union[str, Path]

WHITE = 255
_PPM_HEADER = re.compile(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s")


def render_class_map(labels: np.ndarray, palette: Palette) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DimensionError(f"render_class_map: expected an (H, W) label map, got {labels.shape}")
    table, known = palette.lookup_table()
    ids = labels.astype(np.int64)
    if ids.size and (ids.min() < 0 or ids.max() > 255 or not known[ids].all()):
        missing = sorted({int(v) for v in np.unique(ids) if not 0 <= v <= 255 or not known[v]})
        raise PaletteError(f"render_class_map: no colour for class ids {missing}")
    return table[ids]


def render_diff(pred: np.ndarray, actual: np.ndarray, ignore_id: int = IGNORE_ID) -> np.ndarray:
    """White where the maps disagree, black where they agree or either pixel is ignored."""
    pred, actual = np.asarray(pred), np.asarray(actual)
    if pred.shape != actual.shape or pred.ndim != 2:
        raise DimensionError(f"render_diff: maps {pred.shape} and {actual.shape} must be equal (H, W)")
    differ = (pred != actual) & (pred != ignore_id) & (actual != ignore_id)
    image = np.zeros(pred.shape + (3,), dtype=np.uint8)
    image[differ] = WHITE
    return image


def render_rgb(values: np.ndarray, frame: int, bands: Sequence[int] = (2, 1, 0), gain: float = 1.0) -> np.ndarray:
    """Composite of one acquisition of a (T, C, H, W) stack, reflectances scaled by `gain` to 0..255."""
    values = np.asarray(values)
    if values.ndim != 4:
        raise DimensionError(f"render_rgb: expected (T, C, H, W) values, got {values.shape}")
    if not 0 <= frame < values.shape[0]:
        raise RangeError(f"render_rgb: frame {frame} outside [0, {values.shape[0]})")
    bands = tuple(bands)
    if len(bands) != 3 or any(not 0 <= b < values.shape[1] for b in bands):
        raise RangeError(f"render_rgb: bands {bands} invalid for {values.shape[1]} bands")
    rgb = np.stack([values[frame, b] for b in bands], axis=-1) * gain
    return np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def grid_shape(count: int) -> Tuple[int, int]:
    """(rows, cols) of the smallest near-square grid holding `count` tiles."""
    cols = max(1, math.ceil(math.sqrt(count)))
    return max(1, math.ceil(count / cols)), cols


def stitch(images: Sequence[np.ndarray], rows: int, cols: int) -> np.ndarray:
    """Row-major mosaic: pixel (r, c) of image i * cols + j lands at (i * H + r, j * W + c)."""
    if rows < 1 or cols < 1 or len(images) != rows * cols:
        raise DimensionError(f"stitch: {len(images)} images do not fill a {rows}x{cols} grid")
    shapes = {np.shape(img) for img in images}
    if len(shapes) != 1:
        raise DimensionError(f"stitch: images differ in shape {sorted(shapes)}")
    return rearrange(np.stack(images), "(r c) h w ch -> (r h) (c w) ch", r=rows, c=cols)


# ---- PPM (P6) ----

def ppm_bytes(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise DimensionError(f"ppm_bytes: expected (H, W, 3) uint8, got {image.shape} {image.dtype}")
    h, w, _ = image.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(image).tobytes()


def write_ppm(path: PathLike, image: np.ndarray) -> None:
    Path(path).write_bytes(ppm_bytes(image))


def read_ppm(path: PathLike) -> np.ndarray:
    blob = Path(path).read_bytes()
    match = _PPM_HEADER.match(blob)
    if match is None:
        raise FormatError(f"read_ppm: {path}: not a binary PPM (P6) header at offset 0")
    w, h, maxval = (int(v) for v in match.groups())
    if maxval != 255:
        raise FormatError(f"read_ppm: {path}: maxval {maxval} unsupported, expected 255")
    start = match.end()
    if len(blob) - start != w * h * 3:
        raise FormatError(f"read_ppm: {path}: pixel data at offset {start} holds {len(blob) - start} bytes, expected {w * h * 3}")
    return np.frombuffer(blob, dtype=np.uint8, offset=start).reshape(h, w, 3).copy()
