import numpy as np
import pytest

from hvis.data.skeleton import SkeletonSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_skeleton():
    # one joint per part: trunk root with four limbs
    return SkeletonSpec(["root", "a", "b", "c", "d"], [-1, 0, 0, 0, 0], [0, 1, 2, 3, 4])


