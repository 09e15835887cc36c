"""
Shared fixtures; puts lab/ and the repository root on sys.path like main.py does
"""

import sys
from pathlib import Path

import pytest

lab_dir = Path(__file__).parent.parent
sys.path.insert(0, str(lab_dir))
sys.path.insert(0, str(lab_dir.parent))

from novikov.grid.grid_field import Grid  # noqa: E402
from novikov.utils.logger import set_filesystem, set_silent_mode  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-second simulations on reduced grids")


@pytest.fixture(autouse=True)
def quiet_logger():
    set_silent_mode(True)
    yield
    set_filesystem(None)
    set_silent_mode(False)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(-20.0, 20.0, 1025)


@pytest.fixture(scope="session")
def fine_grid():
    return Grid(-20.0, 20.0, 2049)
