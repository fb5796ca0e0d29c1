"""
Synthetic phenology dataset.

Each tile is a Voronoi partition of 6 to 12 fields; every field grows one
crop class. A pixel's band-b series follows its class curve

    a * sin(2 pi t / T + phase[k, b]) + level[k, b]

plus Gaussian noise, clamped to [0, 1]. Classes cycle through four mean
levels; classes sharing a level are told apart by their phase, so any two
class profiles differ by at least 0.15 somewhere.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from sitswin.data.dataset import ClassInfo, DatasetIndex
from sitswin.data.rng import SplitMix64
from sitswin.data.tile import TIME_MULTIPLE, SitsTile, save_tile
from sitswin.errors import ConfigError
from sitswin.render.palette import default_colors

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

AMPLITUDE = 0.22
LEVELS = (0.24, 0.40, 0.56, 0.72)
BAND_PHASE_STEP = 0.4
NOISE_SIGMA = 0.05
MIN_FIELDS = 6
MAX_FIELDS = 12


def curve_table(num_classes: int, bands: int) -> Tuple[np.ndarray, np.ndarray]:
    """(levels, phases), each (K, C)."""
    phases_per_level = max(6, math.ceil(num_classes / len(LEVELS)))
    k = np.arange(num_classes)
    level = np.asarray(LEVELS)[k % len(LEVELS)]
    phase = 2.0 * math.pi * (k // len(LEVELS)) / phases_per_level
    band = np.arange(bands) * BAND_PHASE_STEP
    return np.repeat(level[:, None], bands, axis=1), phase[:, None] + band[None, :]


def class_profiles(num_classes: int, time_steps: int, bands: int) -> np.ndarray:
    """Noiseless class curves, (K, T, C)."""
    levels, phases = curve_table(num_classes, bands)
    t = 2.0 * math.pi * np.arange(time_steps) / time_steps
    return AMPLITUDE * np.sin(t[None, :, None] + phases[:, None, :]) + levels[:, None, :]


def voronoi_labels(rng: SplitMix64, num_classes: int, height: int, width: int) -> np.ndarray:
    """Label map of 6..12 fields; ties go to the lower field index."""
    fields = MIN_FIELDS + rng.next_below(MAX_FIELDS - MIN_FIELDS + 1)
    centres = np.array([(rng.next_float() * height, rng.next_float() * width) for _ in range(fields)])
    classes = np.array([rng.next_below(num_classes) for _ in range(fields)], dtype=np.uint8)
    rows, cols = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing="ij")
    dist = (rows[None] - centres[:, 0, None, None]) ** 2 + (cols[None] - centres[:, 1, None, None]) ** 2
    return classes[np.argmin(dist, axis=0)]


def synth_tile(rng: SplitMix64, profiles: np.ndarray, height: int, width: int) -> SitsTile:
    num_classes, time_steps, bands = profiles.shape
    labels = voronoi_labels(rng, num_classes, height, width)
    clean = np.moveaxis(profiles[labels], (2, 3), (0, 1))
    noise = rng.normal_array(clean.size).reshape(clean.shape) * NOISE_SIGMA
    return SitsTile(np.clip(clean + noise, 0.0, 1.0).astype(np.float32), labels, num_classes)


def split_counts(num_tiles: int, val_fraction: float, test_fraction: float) -> Tuple[int, int, int]:
    """(train, val, test) with val and test rounded down."""
    n_val = math.floor(val_fraction * num_tiles + 1e-9)
    n_test = math.floor(test_fraction * num_tiles + 1e-9)
    return num_tiles - n_val - n_test, n_val, n_test


def synth_dataset(
    out_dir: PathLike,
    num_tiles: int,
    num_classes: int,
    time_steps: int,
    bands: int,
    height: int = 48,
    width: int = 48,
    seed: int = 0,
    val_fraction: float = 0.2,
    test_fraction: float = 0.2,
) -> DatasetIndex:
    """Write `tile_NNNNN.sit` files, splits.txt and classes.txt under `out_dir`."""
    if num_tiles < 1:
        raise ConfigError(f"synth_dataset: need at least one tile, got {num_tiles}", key="tiles")
    if num_classes < 2 or num_classes >= 255:
        raise ConfigError(f"synth_dataset: classes must be in [2, 255), got {num_classes}", key="classes")
    if time_steps < 1 or time_steps % TIME_MULTIPLE:
        raise ConfigError(f"synth_dataset: timesteps must be a positive multiple of {TIME_MULTIPLE}, got {time_steps}", key="timesteps")
    if bands < 1 or height < 1 or width < 1:
        raise ConfigError(f"synth_dataset: bands/height/width must be positive, got {bands}/{height}/{width}", key="bands")
    if val_fraction < 0 or test_fraction < 0 or val_fraction + test_fraction >= 1:
        raise ConfigError(
            f"synth_dataset: val/test fractions {val_fraction}/{test_fraction} must be >= 0 and leave a train share",
            key="val_fraction",
        )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = SplitMix64(seed)
    profiles = class_profiles(num_classes, time_steps, bands)
    names: List[str] = []
    for i in range(num_tiles):
        name = f"tile_{i:05d}.sit"
        save_tile(synth_tile(rng, profiles, height, width), out_dir / name)
        names.append(name)

    n_train, n_val, _ = split_counts(num_tiles, val_fraction, test_fraction)
    order = rng.permutation(num_tiles)
    split_of = {}
    for rank, i in enumerate(order):
        split_of[i] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    classes = [ClassInfo(k, f"crop_{k:02d}", color) for k, color in enumerate(default_colors(num_classes))]
    index = DatasetIndex(out_dir, [(name, split_of[i]) for i, name in enumerate(names)], classes)
    index.save()
    logger.info("synth: %d tiles (%s) written to %s", num_tiles, index.counts(), out_dir)
    return index
