from pathlib import Path

import numpy as np
import pytest

from iamkit.calibration import load_calibration

CALIB = Path(__file__).resolve().parent.parent / "src" / "iamkit" / "data" / "dice2016.toml"


@pytest.fixture(scope="session")
def cal():
    return load_calibration(CALIB)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260827)
