from dataclasses import replace

import numpy as np
import pytest

from sitswin.cli.verify import MODEL_RTOL, model_gradient_error
from sitswin.config import preset
from sitswin.decoder import ResidualBlock, SegmentationModel, TemporalCollapseHead, UpConcat, model_forward
from sitswin.errors import DimensionError
from sitswin.swin import ModelConfig
from sitswin.tensor import Tensor, instance_norm, leaky_relu, no_grad


def test_head_shape(rng):
    head = TemporalCollapseHead(3, 16, 18, rng)
    with no_grad():
        assert head(Tensor(np.zeros((1, 3, 16, 4, 5)))).shape == (1, 18, 4, 5)


def test_head_with_zero_projection_returns_bias(rng):
    head = TemporalCollapseHead(2, 16, 7, rng)
    head.proj.weight.data[...] = 0.0
    head.proj.bias.data[...] = np.arange(7)
    with no_grad():
        logits = head(Tensor(rng.standard_normal((2, 2, 16, 3, 3)).astype(np.float32))).numpy()
    np.testing.assert_array_equal(logits, np.broadcast_to(np.arange(7, dtype=np.float32)[None, :, None, None], (2, 7, 3, 3)))


def test_head_rejects_wrong_time_extent(rng):
    with pytest.raises(DimensionError):
        TemporalCollapseHead(2, 16, 3, rng)(Tensor(np.zeros((1, 2, 8, 2, 2))))


def test_residual_block_preserves_extents(rng):
    block = ResidualBlock(3, 5, rng)
    with no_grad():
        assert block(Tensor(rng.standard_normal((2, 3, 4, 5, 6)).astype(np.float32))).shape == (2, 5, 4, 5, 6)


def test_residual_block_with_zero_convs_keeps_projected_path(rng):
    block = ResidualBlock(2, 3, rng)
    block.conv1.weight.data[...] = 0.0
    block.conv2.weight.data[...] = 0.0
    x = Tensor(rng.standard_normal((1, 2, 2, 4, 4)).astype(np.float32))
    with no_grad():
        out = block(x).numpy()
        expected = leaky_relu(instance_norm(block.conv3(x)), 0.01).numpy()
    assert np.isfinite(out).all()
    np.testing.assert_allclose(out, expected, rtol=1e-5, atol=1e-6)


def test_up_concat_shapes(rng):
    up = UpConcat(8, 4, rng)
    with no_grad():
        out = up(Tensor(np.zeros((1, 8, 2, 3, 3))), Tensor(np.zeros((1, 4, 4, 6, 6))))
    assert out.shape == (1, 4, 4, 6, 6)
    with pytest.raises(DimensionError):
        up(Tensor(np.zeros((1, 8, 2, 3, 3))), Tensor(np.zeros((1, 4, 4, 6, 4))))


def test_model_forward_on_small_config(small_config, rng):
    cfg = small_config.model
    model = SegmentationModel(cfg, seed=0)
    x = Tensor(rng.random((2,) + cfg.input_shape).astype(np.float32))
    with no_grad():
        logits = model_forward(x, model)
    assert logits.shape == (2, cfg.num_classes, cfg.height, cfg.width)
    assert logits.dtype == np.float32
    assert np.isfinite(logits.numpy()).all()


@pytest.mark.parametrize("steps", [16, 32])
@pytest.mark.parametrize("classes", [2, 7, 18])
@pytest.mark.parametrize("bands", [3, 7, 13])
def test_forward_shape_and_repeatability(small_config, steps, classes, bands):
    cfg = replace(small_config.model, time_steps=steps, num_classes=classes, in_channels=bands)
    model = SegmentationModel(cfg, seed=0)
    x = Tensor(np.random.default_rng(steps + classes + bands).random((1,) + cfg.input_shape).astype(np.float32))
    with no_grad():
        first = model_forward(x, model).numpy()
        second = model_forward(x, model).numpy()
    assert first.shape == (1, classes, cfg.height, cfg.width)
    np.testing.assert_array_equal(first, second)


def test_same_seed_builds_same_model(small_config):
    first = SegmentationModel(small_config.model, seed=3).state_dict()
    second = SegmentationModel(small_config.model, seed=3).state_dict()
    assert list(first) == list(second)
    for name in first:
        np.testing.assert_array_equal(first[name], second[name])


def test_predict_returns_class_ids(small_config, rng):
    cfg = small_config.model
    model = SegmentationModel(cfg)
    ids = model.predict(rng.random((1,) + cfg.input_shape).astype(np.float32))
    assert ids.shape == (1, cfg.height, cfg.width)
    assert ids.dtype == np.uint8
    assert ids.max() < cfg.num_classes
    assert model.training


def test_model_forward_requires_five_axes(small_config):
    with pytest.raises(DimensionError):
        model_forward(Tensor(np.zeros((3, 16, 16, 16))), SegmentationModel(small_config.model))


@pytest.mark.slow
@pytest.mark.parametrize("channels, classes", [(13, 18), (7, 7)])
def test_full_scale_forward_shapes(channels, classes):
    cfg = ModelConfig(in_channels=channels, num_classes=classes)
    model = SegmentationModel(cfg)
    with no_grad():
        logits = model(Tensor(np.zeros((1, channels, 32, 48, 48), dtype=np.float32)))
    assert logits.shape == (1, classes, 48, 48)


def test_lombardia_preset_has_seven_classes():
    cfg = preset("lombardia-like").model
    assert (cfg.in_channels, cfg.num_classes) == (7, 7)


@pytest.mark.parametrize("seed", [0, 1])
def test_end_to_end_float32_gradients(seed):
    assert model_gradient_error(seed) < MODEL_RTOL
