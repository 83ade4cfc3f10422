"""Shared fixtures of the sdq test suite."""

import os

import numpy as np
import pytest

from sdq import Dataset, DampingConfig, InitMode, CurvatureMemory, damp_pair
from sdq.sdq_data import MNIST_FILES


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def identity_cfg():
    return DampingConfig(mode=InitMode.IDENTITY)


@pytest.fixture
def gamma_cfg():
    return DampingConfig(mode=InitMode.GAMMA, delta=0.01)


@pytest.fixture
def tiny_dataset():
    """Eight 4-feature samples, two balanced classes."""
    features = np.array([
        [0.1, 0.9, 0.3, 0.2],
        [0.8, 0.1, 0.5, 0.7],
        [0.2, 0.7, 0.1, 0.4],
        [0.9, 0.3, 0.6, 0.8],
        [0.3, 0.8, 0.2, 0.1],
        [0.7, 0.2, 0.9, 0.6],
        [0.0, 0.6, 0.4, 0.3],
        [0.6, 0.4, 0.8, 0.9],
    ])
    labels = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    return Dataset(features, labels, 2)


def random_pair(rng, d, hinv_scale, cfg, undamped=False):
    """Random (s, y) with |s| in [0.5, 2]; `undamped` draws y close to s."""
    s = rng.standard_normal(d)
    s *= rng.uniform(0.5, 2.0) / np.linalg.norm(s)
    if undamped:
        y = s * rng.uniform(0.5, 2.0) + 0.1 * rng.standard_normal(d)
    else:
        y = rng.standard_normal(d)
    return damp_pair(s, y, hinv_scale, cfg)


def random_memory(rng, cfg, d=None, count=None, capacity=8):
    """Memory of up to `capacity` damped and undamped pairs of a random dimension."""
    d = int(rng.integers(1, 11)) if d is None else d
    count = int(rng.integers(0, capacity + 1)) if count is None else count
    memory = CurvatureMemory(capacity, dim=d)
    while len(memory) < count:
        pair = random_pair(rng, d, rng.uniform(0.5, 2.0), cfg, undamped=bool(rng.integers(0, 2)))
        if pair is not None:
            memory.push(pair)
    return memory


@pytest.fixture
def mnist_dir():
    """Directory named by SDQ_MNIST_DIR; the test is skipped without the IDX files."""
    directory = os.getenv('SDQ_MNIST_DIR', '').strip()
    if not directory:
        pytest.skip("SDQ_MNIST_DIR is not set")
    images, labels = MNIST_FILES['train']
    found = [any(os.path.isfile(os.path.join(directory, n)) for n in names) for names in (images, labels)]
    if not all(found):
        pytest.skip(f"no uncompressed MNIST training files in {directory}")
    return directory
