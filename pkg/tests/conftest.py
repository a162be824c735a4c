import numpy as np
import pytest

from interventionlab.envs import GridConfig, KeyChestEnv


@pytest.fixture
def quiet_b():
    """Env B without display noise."""
    return KeyChestEnv(GridConfig.for_env("B", food_noise_prob=0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
