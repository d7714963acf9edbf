import math

import numpy as np
import pytest

from qiup.grid import FieldGrid, ObjectMask
from qiup.interferometer import InterferometerConfig

BALANCED = 1 / math.sqrt(2)
LADDER4 = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2]


def binary_silhouette(n=32, seed=0):
    """Blocky binary mask with a few rectangles; edges fall on pixel boundaries."""
    rng = np.random.default_rng(seed)
    m = np.zeros((n, n))
    for _ in range(4):
        x0, y0 = rng.integers(0, n - 8, size=2)
        w, h = rng.integers(3, 8, size=2)
        m[y0:y0 + h, x0:x0 + w] = 1.0
    return m


@pytest.fixture
def balanced_cfg():
    return InterferometerConfig(BALANCED, BALANCED)


@pytest.fixture
def grid32():
    return FieldGrid(32, 32, 1.0)


@pytest.fixture
def binary_mask(grid32):
    return ObjectMask(grid32, binary_silhouette(32))


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
