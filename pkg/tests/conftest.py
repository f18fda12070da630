"""Shared fixtures and the ``--run-slow`` switch."""

import pytest
import torch

from omnidet.config import Config, build_config
from omnidet.data.io import build_dataset


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow", action="store_true", default=False, help="run multi-minute training tests"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _no_output_dir_env(monkeypatch):
    """Keep OMNIDET_OUTPUT_DIR from leaking into config tests."""
    monkeypatch.delenv("OMNIDET_OUTPUT_DIR", raising=False)


@pytest.fixture
def generator():
    """Seeded torch generator."""
    return torch.Generator().manual_seed(1234)


@pytest.fixture
def tiny_config(tmp_path):
    """A config small enough for a few CPU training steps."""
    return build_config(
        {
            "num_classes": 3,
            "image_size": 32,
            "pyramid_levels": 2,
            "feature_channels": 8,
            "lr": 1e-3,
            "max_steps": 4,
            "eval_every": 2,
            "log_every": 1,
            "checkpoint_every": 2,
            "granularity": (0.4, 0.3, 0.3),
            "output_dir": str(tmp_path / "run"),
        }
    )


@pytest.fixture
def tiny_dataset(tmp_path):
    """A synthetic 3-class dataset of 32px images on disk."""
    root = tmp_path / "data"
    build_dataset(root, seed=3, n_images=30, image_size=32, num_classes=3)
    return root


@pytest.fixture
def default_config() -> Config:
    return Config()
