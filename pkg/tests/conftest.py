import numpy as np
import pytest

from battery import CASES, FIXTURES, load_channel


@pytest.fixture(scope="session")
def scenario1():
    case = next(c for c in CASES if c.name == "scenario1")
    return load_channel(case), case.scenario


@pytest.fixture(scope="session")
def scenario2():
    case = next(c for c in CASES if c.name == "scenario2")
    return load_channel(case), case.scenario


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(123456789)


@pytest.fixture
def fixtures_dir():
    return FIXTURES
