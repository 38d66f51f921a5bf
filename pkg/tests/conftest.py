import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for oracles.py

from flimsod.pipeline import synth_dataset


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """One shared small synthetic dataset (22 images, 2 marked, 256px)."""
    root = tmp_path_factory.mktemp("synth") / "ds"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        synth_dataset(root, seed=42, n_images=22, size=256, marked=2)
    return root


@pytest.fixture(scope="session")
def tiny_root(tmp_path_factory):
    """Tiny 48px dataset for grid sweeps (fast to train on)."""
    root = tmp_path_factory.mktemp("tiny") / "ds"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        synth_dataset(root, seed=7, n_images=6, size=48, marked=2,
                      object_area=(80, 200), impurities=(1, 3))
    return root


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
