import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from amcen.config import TrainConfig
from amcen.synthetic import recurrence_fixture

settings.register_profile("amcen", deadline=None)
settings.load_profile("amcen")


@pytest.fixture(scope="session")
def fixture_dataset():
    return recurrence_fixture()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_config(**overrides) -> TrainConfig:
    """Small, fast configuration for toy models in unit tests."""
    defaults = dict(embed_dim=16, num_heads=2, num_layers=1, window_size=3,
                    dropout=0.0, batch_size=64, stage1_epochs=2, stage2_epochs=3,
                    eval_every=10, seed=7)
    defaults.update(overrides)
    return TrainConfig(**defaults)
