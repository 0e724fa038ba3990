import math

import numpy as np
import pytest

from monoguide.geometry import Box3D, CameraModel
from monoguide.synth import KITTI_P2


@pytest.fixture
def camera():
    return CameraModel(KITTI_P2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_box(rng, depth=(8.0, 40.0)) -> Box3D:
    return Box3D(
        w=rng.uniform(1.4, 2.0), h=rng.uniform(1.3, 1.8), l=rng.uniform(3.2, 4.8),
        x=rng.uniform(-8.0, 8.0), y=rng.uniform(1.4, 1.9), z=rng.uniform(*depth),
        theta=rng.uniform(-math.pi, math.pi),
    )


# one summary line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
