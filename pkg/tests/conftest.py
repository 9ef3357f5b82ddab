import numpy as np
import pytest

from igatwo.spline_core import identity_square, preset_quarter_annulus


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def square():
    return identity_square()


@pytest.fixture(scope="session")
def annulus():
    return preset_quarter_annulus(0.3, 0.5)
