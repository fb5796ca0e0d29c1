import itertools
import struct
from collections import Counter

import numpy as np
import pytest

from sitswin.data import (
    Dataset,
    DatasetIndex,
    SitsTile,
    SplitMix64,
    augment_flip,
    batch_tiles,
    class_profiles,
    flip_tile,
    load_tile,
    normalize_bands,
    save_tile,
    split_counts,
    synth_dataset,
    temporal_resample,
)
from sitswin.data.tile import tile_from_bytes, tile_to_bytes
from sitswin.errors import ConfigError, DimensionError, FormatError, RangeError


def _tile(rng, t=4, c=3, h=5, w=6, k=4):
    values = rng.random((t, c, h, w)).astype(np.float32)
    labels = rng.integers(0, k, size=(h, w)).astype(np.uint8)
    labels[0, 0] = 255
    return SitsTile(values, labels, k)


def test_splitmix_reference_outputs():
    rng = SplitMix64(0)
    assert rng.next_u64() == 0xE220A8397B1DCDAF
    assert rng.next_u64() == 0x6E789E6AA1B965F4


def test_splitmix_bulk_draws_follow_scalar_stream():
    scalar, bulk = SplitMix64(42), SplitMix64(42)
    expected = [scalar.next_u64() for _ in range(10)]
    assert bulk.u64_array(10).tolist() == expected
    assert bulk.next_u64() == scalar.next_u64()


def test_permutation_is_a_permutation():
    order = SplitMix64(3).permutation(20)
    assert sorted(order) == list(range(20))
    assert order == SplitMix64(3).permutation(20)


def test_tile_round_trip(rng, tmp_path):
    for i in range(20):
        tile = _tile(rng)
        path = tmp_path / f"t{i}.sit"
        save_tile(tile, path)
        assert load_tile(path) == tile


def test_header_is_sixteen_bytes():
    tile = SitsTile(np.zeros((32, 13, 48, 48), dtype=np.float32), np.zeros((48, 48), dtype=np.uint8), 18)
    blob = tile_to_bytes(tile)
    assert len(blob) == 16 + 32 * 13 * 48 * 48 * 4 + 48 * 48
    assert blob[:4] == b"SIT1"
    assert struct.unpack_from("<6H", blob, 4) == (32, 13, 48, 48, 18, 0)


def test_bad_magic_rejected(rng):
    blob = bytearray(tile_to_bytes(_tile(rng)))
    blob[:4] = b"XXXX"
    with pytest.raises(FormatError, match="offset 0"):
        tile_from_bytes(bytes(blob))


def test_truncated_payload_rejected(rng):
    blob = tile_to_bytes(_tile(rng))
    with pytest.raises(FormatError, match="truncated"):
        tile_from_bytes(blob[:-3])


def test_label_out_of_range_names_offset(rng):
    tile = _tile(rng, t=1, c=1, h=2, w=2, k=3)
    blob = bytearray(tile_to_bytes(tile))
    blob[-1] = 7
    with pytest.raises(FormatError, match=f"offset {len(blob) - 1}"):
        tile_from_bytes(bytes(blob))


def test_tile_invariants():
    with pytest.raises(RangeError):
        SitsTile(np.zeros((1, 1, 2, 2)), np.full((2, 2), 3), 3)
    with pytest.raises(DimensionError):
        SitsTile(np.zeros((1, 1, 2, 2)), np.zeros((2, 3)), 3)


def test_temporal_resample(rng):
    tile = _tile(rng, t=16)
    assert temporal_resample(tile, 16) is tile

    doubled = temporal_resample(tile, 32)
    np.testing.assert_array_equal(doubled.values[0::2], tile.values)
    np.testing.assert_array_equal(doubled.values[1::2], tile.values)

    long = SitsTile(np.arange(70, dtype=np.float32).reshape(70, 1, 1, 1), np.zeros((1, 1)), 2)
    frames = temporal_resample(long, 32).values.reshape(-1)
    np.testing.assert_array_equal(frames, [k * 70 // 32 for k in range(32)])
    assert frames[-1] == 67
    assert (np.diff(frames) >= 0).all()


def test_temporal_resample_rejects_bad_length(rng):
    with pytest.raises(ConfigError):
        temporal_resample(_tile(rng), 17)


def test_flip_moves_labels(rng):
    tile = _tile(rng)
    flipped = flip_tile(tile, vertical=False, horizontal=True)
    w = tile.width
    for r, c in itertools.product(range(tile.height), range(w)):
        assert flipped.labels[r, w - 1 - c] == tile.labels[r, c]
    np.testing.assert_array_equal(flipped.values[:, :, :, ::-1], tile.values)
    assert flip_tile(flip_tile(tile, True, True), True, True) == tile


def test_augment_flip_is_reproducible_and_keeps_labels(rng):
    tile = _tile(rng)
    first, second = SplitMix64(11), SplitMix64(11)
    for _ in range(100):
        a, b = augment_flip(tile, first), augment_flip(tile, second)
        assert a == b
        assert Counter(a.labels.reshape(-1).tolist()) == Counter(tile.labels.reshape(-1).tolist())


def test_normalize_bands():
    np.testing.assert_array_equal(normalize_bands(np.array([0, 10000, 12000, 5000])), [0.0, 1.0, 1.0, 0.5])


def test_batch_tiles_layout(rng):
    tiles = [_tile(rng), _tile(rng)]
    values, labels = batch_tiles(tiles)
    assert values.shape == (2, 3, 4, 5, 6)
    assert labels.shape == (2, 5, 6)
    np.testing.assert_array_equal(values[1, 2, 3], tiles[1].values[3, 2])
    with pytest.raises(DimensionError):
        batch_tiles([_tile(rng), _tile(rng, t=8)])
    with pytest.raises(DimensionError):
        batch_tiles([])


def test_split_counts():
    assert split_counts(10, 0.2, 0.2) == (6, 2, 2)
    assert split_counts(7, 0.2, 0.2) == (5, 1, 1)
    # 0.29 * 100 is 28.999999999999996 in binary floating point
    assert split_counts(100, 0.29, 0.07) == (64, 29, 7)


def test_synth_dataset_layout(small_dataset):
    index = DatasetIndex.load(small_dataset, check_tiles=True)
    assert index.counts() == {"train": 6, "val": 2, "test": 2}
    assert [c.name for c in index.classes] == ["crop_00", "crop_01", "crop_02"]
    for path in index.files("train"):
        tile = load_tile(path)
        assert tile.values.shape == (16, 3, 16, 16)
        assert tile.labels.max() < 3
        assert 0.0 <= tile.values.min() and tile.values.max() <= 1.0


def test_synth_dataset_is_deterministic(tmp_path):
    for name in ("a", "b"):
        synth_dataset(tmp_path / name, 4, 3, 16, 2, height=8, width=8, seed=5)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_rejects_bad_time_length(tmp_path):
    with pytest.raises(ConfigError):
        synth_dataset(tmp_path, 2, 3, 17, 2)


@pytest.mark.parametrize("classes, steps, bands", [(18, 32, 13), (7, 32, 7), (5, 16, 4)])
def test_class_profiles_are_separated(classes, steps, bands):
    profiles = class_profiles(classes, steps, bands)
    for a, b in itertools.combinations(range(classes), 2):
        assert np.abs(profiles[a] - profiles[b]).max() >= 0.15


def test_noiseless_curves_identify_their_class():
    profiles = class_profiles(18, 32, 13)
    distance = np.abs(profiles[:, None] - profiles[None]).max(axis=(2, 3))
    np.testing.assert_array_equal(distance.argmin(axis=1), np.arange(18))


def test_dataset_split_and_resampling(small_dataset):
    dataset = Dataset.open(small_dataset, time_steps=32)
    tiles = dataset.split("val")
    assert len(tiles) == 2
    assert tiles[0].time_steps == 32
    assert dataset.split("val")[0] is tiles[0]
    with pytest.raises(ConfigError):
        dataset.split("holdout")


def test_missing_dataset_directory(tmp_path):
    with pytest.raises(ConfigError):
        DatasetIndex.load(tmp_path / "absent")


def test_missing_listed_tile(small_dataset):
    (small_dataset / "tile_00000.sit").unlink()
    with pytest.raises(FormatError):
        DatasetIndex.load(small_dataset)
