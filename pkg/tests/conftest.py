import numpy as np
import pytest

from exeuler.conformal import BodyShape, build_map
from exeuler.validation import reference_shape


@pytest.fixture(scope="session")
def disk_map():
    return build_map(BodyShape.disk(1.0))


@pytest.fixture(scope="session")
def ellipse_map():
    return build_map(BodyShape.ellipse(2.0, 1.0))


@pytest.fixture(scope="session")
def blob_map():
    """Map of a smooth non-symmetric body (Laurent order > 2)."""
    return build_map(reference_shape())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
