import os

import numpy as np
import pytest

from layermatch import synth
from layermatch.data import split_trial

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")


@pytest.fixture(scope="session")
def dataset():
    """The shipped two-view digit tables as (source, target)."""
    return synth.load_dataset(DATA_DIR)


@pytest.fixture(scope="session")
def small_split(dataset):
    """One deterministic binary split, shared by training-path tests."""
    source, target = dataset
    return split_trial(source, target, (3, 8), seed=7)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
