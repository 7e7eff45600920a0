import numpy as np
import pytest

from cerec.core import ContentFeatures
from cerec.core import RatingMatrix
from cerec.dataio.synthetic import SyntheticSpec
from cerec.dataio.synthetic import generate_synthetic


@pytest.fixture
def tiny_ratings():
    """4 users, 5 videos, 7 likes."""
    return RatingMatrix(
        4,
        5,
        users=[0, 0, 1, 2, 2, 3, 3],
        videos=[0, 2, 1, 0, 4, 3, 2],
    )


@pytest.fixture
def tiny_features():
    rng = np.random.default_rng(42)
    return ContentFeatures("tiny", rng.normal(size=(3, 5)))


@pytest.fixture(scope="session")
def planted():
    """Planted data small enough to train in well under a second per sweep."""
    return generate_synthetic(SyntheticSpec(m=80, n=60, d=10, k_true=3, seed=7))
