import numpy as np
import pytest

from fusecast.nn import ModelConfig, init_params


TINY_CONFIG = dict(w=8, cnn_layers=2, filters=4, kernel_size=2, heads=2, head_dim=2)


@pytest.fixture
def tiny_params():
    return init_params(ModelConfig(**TINY_CONFIG, seed=7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
