import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("locindex", max_examples=25, deadline=None)
settings.load_profile("locindex")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
