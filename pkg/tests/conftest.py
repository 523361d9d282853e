import numpy as np
import pytest
from hypothesis import settings

from unicdm.simulation import make_rng

# first calls pay numba compilation, so wall-clock deadlines are meaningless
settings.register_profile("unicdm", deadline=None, max_examples=60)
settings.load_profile("unicdm")


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(12345)
