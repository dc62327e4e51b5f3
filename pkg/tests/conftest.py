import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hamlock.model import builtin  # noqa: E402
from hamlock.mountainpass import find_one_bump  # noqa: E402


@pytest.fixture(scope="session")
def cubic():
    return builtin("scalar_power", [1, 4])


@pytest.fixture(scope="session")
def cubic_bump(cubic):
    rep = find_one_bump(cubic)
    assert rep.converged
    return rep
