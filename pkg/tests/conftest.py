import numpy as np
import pytest

from gcblocks import FeatureMap


def random_map(channels: int, positions: int, seed: int) -> FeatureMap:
    rng = np.random.default_rng(seed)
    return FeatureMap(rng.standard_normal((channels, positions)), height=positions, width=1)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
