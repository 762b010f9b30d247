import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("wdce", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("wdce")


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)
