import numpy as np
import pytest

from sitswin.config import preset
from sitswin.data.synth import synth_dataset
from sitswin.tensor import precision


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the long training acceptance runs")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance run, only with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def float64():
    with precision(np.float64):
        yield


@pytest.fixture
def small_config():
    """16x16 tiles, 3 bands, 3 classes: the smallest valid geometry."""
    return preset("gradcheck")


@pytest.fixture
def small_dataset(tmp_path, small_config):
    cfg = small_config.model
    root = tmp_path / "small"
    synth_dataset(root, 10, cfg.num_classes, cfg.time_steps, cfg.in_channels, height=cfg.height, width=cfg.width, seed=7)
    return root
