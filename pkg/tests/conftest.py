import numpy as np
import pytest

from mapfuse.config import Settings
from mapfuse.params import reset_registry
from mapfuse.scene import ScenarioConfig, ScenarioState, generate


@pytest.fixture(autouse=True)
def fresh_registry():
    reset_registry()
    yield
    reset_registry()


@pytest.fixture
def settings():
    return Settings()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def clean_config():
    return ScenarioConfig().noiseless()


@pytest.fixture
def clean_pair(clean_config):
    """State (b): same direction, one covisible window, no noise, scale ratio 2."""
    return generate(ScenarioState.SameDirSingleLC, clean_config.with_scales(1.0, 2.0), seed=7)


@pytest.fixture
def noisy_pair():
    return generate(ScenarioState.SameDirSingleLC, ScenarioConfig(scales=(1.0, 1.5)), seed=3)
