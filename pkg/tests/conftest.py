from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def mmlu_path():
    return FIXTURES / "mmlu_pro_adjacent.csv"


@pytest.fixture
def oll_path():
    return FIXTURES / "oll_close_pairs.csv"
