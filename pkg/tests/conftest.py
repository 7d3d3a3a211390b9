import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def shapes128():
    from p4ip.imaging import synthetic_image

    return synthetic_image("shapes", 128)
