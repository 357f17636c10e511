import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
TESTS = Path(__file__).resolve().parent
for path in (ROOT, TESTS):
    if str(path) not in sys.path:
        sys.path.insert(0, str(path))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def diag321():
    from linalg import DataMatrix

    return DataMatrix(np.diag([3.0, 2.0, 1.0]))


@pytest.fixture
def diag32():
    from linalg import DataMatrix

    return DataMatrix(np.diag([3.0, 2.0]))
