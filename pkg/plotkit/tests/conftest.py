import pathlib

import pytest

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

STRATEGIES = ["LSSC", "LSFC", "GCC", "DCC-C", "DCC-U"]


@pytest.fixture
def fix():
    return FIXTURES


@pytest.fixture
def series_paths():
    return [str(FIXTURES / f"series_{s}.csv") for s in STRATEGIES]
