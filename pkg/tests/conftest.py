import numpy as np
import pytest

from reasoning_entropy import oracle as orc
from reasoning_entropy.rollout import SyntheticBackend


@pytest.fixture(scope="session")
def small_world():
    return orc.generate_aligned_world(7, (2, 2, 4), 3, 0.5)


@pytest.fixture(scope="session")
def reveal_world():
    return orc.generate_aligned_world(3, (2, 4, 4), 2, 1.0)


@pytest.fixture(scope="session")
def aligned_backend():
    w = orc.generate_aligned_world(0, (4, 6, 4), 4, 0.4)
    return SyntheticBackend(orc.TabularAutoregressiveModel.from_joint(w), w, coupled=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
