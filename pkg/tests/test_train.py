import importlib
import math
from dataclasses import replace

import numpy as np
import pytest

from sitswin.config import PRESETS, RunConfig, TrainConfig, parse_config, preset
from sitswin.data import Dataset, synth_dataset
from sitswin.decoder import SegmentationModel
from sitswin.errors import ConfigError, DimensionError, FormatError, ParameterError
from sitswin.metrics import evaluate
from sitswin.swin import ModelConfig
from sitswin.train import (
    SGD,
    Checkpoint,
    EpochRecord,
    checkpoint_bytes,
    checkpoint_from_bytes,
    cosine_lr,
    fit,
    load_checkpoint,
    save_checkpoint,
    sgd_momentum_step,
    steps_per_epoch,
)


def test_cosine_endpoints():
    assert cosine_lr(0, 100, 0.01, 0.001) == pytest.approx(0.01, abs=1e-12)
    assert cosine_lr(50, 100, 0.01, 0.001) == pytest.approx(0.0055, abs=1e-12)
    assert cosine_lr(100, 100, 0.01, 0.001) == pytest.approx(0.001, abs=1e-12)


def test_cosine_is_nonincreasing():
    rates = [cosine_lr(s, 37, 0.05) for s in range(38)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


def test_cosine_rejects_out_of_range_step():
    with pytest.raises(ParameterError):
        cosine_lr(11, 10, 0.1)
    with pytest.raises(ParameterError):
        cosine_lr(0, 0, 0.1)


def test_sgd_momentum_hand_example():
    w, v = np.array([1.0]), np.array([0.0])
    g = np.array([0.5])
    sgd_momentum_step([w], [g], [v], 0.1, 0.9)
    assert (w[0], v[0]) == pytest.approx((0.95, 0.5), abs=1e-12)
    sgd_momentum_step([w], [g], [v], 0.1, 0.9)
    assert (w[0], v[0]) == pytest.approx((0.855, 0.95), abs=1e-12)


def test_sgd_degenerate_cases():
    w = np.array([1.0, 2.0])
    sgd_momentum_step([w], [np.zeros(2)], [np.zeros(2)], 0.1, 0.9)
    np.testing.assert_array_equal(w, [1.0, 2.0])
    sgd_momentum_step([w], [np.array([0.5, -1.0])], [np.zeros(2)], 1.0, 0.0)
    np.testing.assert_array_equal(w, [0.5, 3.0])
    with pytest.raises(DimensionError):
        sgd_momentum_step([w], [np.zeros(3)], [np.zeros(2)], 0.1, 0.9)


def _weights(model):
    return {name: value.copy() for name, value in model.state_dict().items()}


def test_sgd_leaves_parameters_alone_without_gradient(small_config):
    model = SegmentationModel(small_config.model, seed=2)
    before = _weights(model)
    optimizer = SGD(model)
    for _ in range(3):
        model.zero_grad()
        optimizer.step(0.1)
    for name, value in model.state_dict().items():
        np.testing.assert_array_equal(value, before[name])


def test_zero_gradients_are_a_fixed_point_of_fit(small_config, train_tiles, monkeypatch):
    monkeypatch.setattr(importlib.import_module("sitswin.train.fit"), "backward", lambda loss: None)
    model = SegmentationModel(small_config.model, seed=0)
    before = _weights(model)
    result = fit(model, train_tiles, TrainConfig(epochs=2, batch_size=3))
    assert len(result.step_losses) == 4
    for name, value in model.state_dict().items():
        np.testing.assert_array_equal(value, before[name])
    assert not any(np.any(v) for v in result.final.velocities().values())


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ConfigError):
        TrainConfig(lr_max=0.01, lr_min=0.1)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_config_text_round_trip(name):
    config = PRESETS[name]
    text = config.to_text()
    keys = [line.split(" = ")[0] for line in text.splitlines() if not line.startswith("#")]
    assert keys == list(ModelConfig.field_names() + TrainConfig.field_names())
    assert parse_config(text) == config


def test_config_error_names_line_and_key():
    with pytest.raises(ConfigError, match="run.txt:2") as info:
        parse_config("preset = tiny\ntime_steps = 17\n", "run.txt")
    assert (info.value.key, info.value.line) == ("time_steps", 2)


def test_epoch_record_line():
    assert EpochRecord(3, 12, 0.0125, 0.5).line() == "epoch=3 step=12 lr=0.0125 loss=0.500000"
    assert EpochRecord(1, 4, 0.05, 1.25, 0.875).line().endswith(" val_oa=0.8750")


def test_steps_per_epoch():
    assert steps_per_epoch(6, 2) == 3
    assert steps_per_epoch(7, 2) == 4


@pytest.fixture
def train_tiles(small_dataset, small_config):
    return Dataset.open(small_dataset, small_config.model.time_steps).split("train")


def test_checkpoint_round_trip(small_config, tmp_path):
    model = SegmentationModel(small_config.model, seed=1)
    velocities = SGD(model).state_dict()
    ckpt = Checkpoint.capture(small_config, model, velocities, step=12, epoch=4)
    save_checkpoint(ckpt, tmp_path / "model.ckpt")
    loaded = load_checkpoint(tmp_path / "model.ckpt")
    assert loaded.config == small_config
    assert (loaded.step, loaded.epoch, loaded.version) == (12, 4, 1)
    assert list(loaded.tensors) == list(ckpt.tensors)
    for name, value in ckpt.tensors.items():
        assert loaded.tensors[name].tobytes() == value.tobytes()
    rebuilt = loaded.build_model().state_dict()
    for name, value in model.state_dict().items():
        np.testing.assert_array_equal(rebuilt[name], value)


def test_checkpoint_into_mismatched_config_names_tensor(small_config):
    ckpt = Checkpoint.capture(small_config, SegmentationModel(small_config.model), {}, 0, 0)
    other = replace(small_config.model, num_classes=4)
    with pytest.raises(DimensionError, match="head.proj.weight"):
        SegmentationModel(other).load_state_dict(ckpt.model_state())


def test_checkpoint_format_errors(small_config):
    blob = checkpoint_bytes(Checkpoint.capture(small_config, SegmentationModel(small_config.model), {}, 0, 0))
    assert blob[:4] == b"SWCK"
    with pytest.raises(FormatError, match="magic"):
        checkpoint_from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(FormatError, match="version"):
        checkpoint_from_bytes(blob[:4] + (2).to_bytes(4, "little") + blob[8:])
    with pytest.raises(FormatError, match="truncated"):
        checkpoint_from_bytes(blob[:-10])
    with pytest.raises(FormatError, match="trailing"):
        checkpoint_from_bytes(blob + b"\0")


def test_fit_requires_train_tiles(small_config):
    with pytest.raises(ConfigError):
        fit(SegmentationModel(small_config.model), [], small_config.train)


def test_fit_rejects_config_for_another_model(small_config, train_tiles):
    model = SegmentationModel(small_config.model)
    with pytest.raises(ConfigError):
        fit(model, train_tiles, small_config.train, run_config=preset("tiny"))


def _run(config, tiles, **kwargs):
    model = SegmentationModel(config.model, seed=0)
    return fit(model, tiles, config.train, run_config=config, **kwargs)


def test_five_steps_are_deterministic(small_config, train_tiles):
    config = RunConfig(small_config.model, TrainConfig(epochs=2, batch_size=2, seed=3))
    first = _run(config, train_tiles, max_steps=5)
    second = _run(config, train_tiles, max_steps=5)
    assert len(first.step_losses) == 5
    assert first.step_losses == second.step_losses
    assert checkpoint_bytes(first.final) == checkpoint_bytes(second.final)
    assert first.final.step == 5
    assert first.final.epoch == 1


def test_resume_replays_uninterrupted_run(small_config, train_tiles, tmp_path):
    config = RunConfig(small_config.model, TrainConfig(epochs=2, batch_size=2, seed=1))
    whole = _run(config, train_tiles)

    half = _run(config, train_tiles, stop_epoch=1)
    assert (half.final.step, half.final.epoch) == (3, 1)
    save_checkpoint(half.final, tmp_path / "half.ckpt")
    resumed = _run(config, train_tiles, resume=load_checkpoint(tmp_path / "half.ckpt"))

    assert half.step_losses == whole.step_losses[:3]
    assert resumed.step_losses == whole.step_losses[3:]
    assert checkpoint_bytes(resumed.final) == checkpoint_bytes(whole.final)


def test_resume_requires_epoch_boundary(small_config, train_tiles):
    config = RunConfig(small_config.model, TrainConfig(epochs=2, batch_size=2))
    partial = _run(config, train_tiles, max_steps=2)
    with pytest.raises(ConfigError):
        _run(config, train_tiles, resume=partial.final)


def test_fit_logs_one_record_per_epoch_and_keeps_best(small_config, small_dataset):
    dataset = Dataset.open(small_dataset, small_config.model.time_steps)
    config = RunConfig(small_config.model, TrainConfig(epochs=2, batch_size=3))
    seen = []
    result = _run(config, dataset.split("train"), val_tiles=dataset.split("val"), on_epoch=seen.append)
    assert [r.epoch for r in result.records] == [1, 2]
    assert seen == result.records
    assert [r.step for r in result.records] == [2, 4]
    assert result.records[0].lr > result.records[1].lr
    assert all(r.val_oa is not None for r in result.records)
    assert result.best_val_oa == max(r.val_oa for r in result.records)
    assert result.best is not None
    lines = result.log_lines()
    assert lines[-2].startswith("best val_oa=")
    assert lines[-1].startswith("final train_oa=")


@pytest.mark.slow
def test_tiny_preset_overfits_eight_tiles(tmp_path):
    config = preset("tiny")
    cfg = config.model
    synth_dataset(tmp_path, 8, cfg.num_classes, cfg.time_steps, cfg.in_channels, seed=7, val_fraction=0.0, test_fraction=0.0)
    tiles = Dataset.open(tmp_path, cfg.time_steps).split("train")
    result = _run(config, tiles, max_steps=300)
    assert len(result.step_losses) == 300
    assert result.step_losses[0] == pytest.approx(math.log(cfg.num_classes), abs=0.3)
    assert np.mean(result.step_losses[-20:]) < result.step_losses[0]
    assert result.train_oa >= 0.98


@pytest.mark.slow
def test_tiny_preset_generalizes(tmp_path):
    config = preset("tiny")
    cfg = config.model
    synth_dataset(tmp_path, 80, cfg.num_classes, cfg.time_steps, cfg.in_channels, seed=7, val_fraction=0.2, test_fraction=0.0)
    dataset = Dataset.open(tmp_path, cfg.time_steps)
    result = _run(config, dataset.split("train"), val_tiles=dataset.split("val"), stop_epoch=30)
    model = result.best.build_model()
    matrix = evaluate(model, dataset.split("val"), threads=2)
    assert matrix.overall_accuracy() >= 0.85
    assert matrix.cohen_kappa() >= 0.80
