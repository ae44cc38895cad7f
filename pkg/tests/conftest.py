"""Pytest configuration file."""

# Fix import path for test_helpers
import sys
from pathlib import Path

import numpy as np
import pytest

# Add tests directory to path
tests_dir = Path(__file__).parent
if str(tests_dir) not in sys.path:
    sys.path.insert(0, str(tests_dir))

from test_helpers import IMAGE_SIZE, tiny_architecture

from axfi_lite.datasets import make_bars_dataset, write_idx
from axfi_lite.model import build_model, quantize_model


@pytest.fixture(scope="session")
def bars():
    """64 two-class bar images of 12x12 pixels."""
    return make_bars_dataset(64, seed=3, size=IMAGE_SIZE)


@pytest.fixture(scope="session")
def float_model():
    """Small CNN with seeded random weights (no training)."""
    return build_model(tiny_architecture(), (1, IMAGE_SIZE, IMAGE_SIZE), 2, seed=11, name="tiny")


@pytest.fixture(scope="session")
def quant_model(float_model, bars):
    """The tiny CNN quantized with activation scales calibrated on the bars."""
    return quantize_model(float_model, calibration=bars.images[:32])


@pytest.fixture
def idx_files(tmp_path, bars):
    """The bars dataset written as IDX files; returns (images_path, labels_path)."""
    images = tmp_path / "images-idx3-ubyte"
    labels = tmp_path / "labels-idx1-ubyte"
    write_idx(bars.images, bars.labels, images, labels)
    return images, labels


@pytest.fixture
def rng():
    """Fresh seeded generator for test data."""
    return np.random.default_rng(1234)
