"""Shared fixtures: small networks, synthetic volumes and datasets."""

import numpy as np
import pytest

from data.dataset import SliceDataset
from data.synthetic import synthesize_volume
from network.config import NetworkConfig
from network.model import build_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Smallest useful network: 16x16 planes, S=2, L=3, K=4, 8 channels, no dropout."""
    return NetworkConfig(num_classes=3, stack_depth=2, channels=8, codewords=4, dropout_rate=0.0)


@pytest.fixture
def tiny_params(tiny_config):
    return build_params(tiny_config, seed=0)


@pytest.fixture
def phantom():
    """One synthetic 4x16x16 volume with three classes."""
    return synthesize_volume(np.random.default_rng(7), (4, 16, 16), 3, 'phantom')


@pytest.fixture
def tiny_dataset(phantom):
    volume, labels = phantom
    return SliceDataset([(volume, labels)], stack_depth=2, num_classes=3)


@pytest.fixture
def float64_leaf():
    """Factory for float64 parameters drawn from a seeded generator."""
    from autograd import Parameter

    def make(rng, shape, name='p', scale=1.0):
        return Parameter(rng.standard_normal(shape) * scale, name=name, dtype=np.float64)

    return make
