import pytest

from _helpers import labeled, running_db


@pytest.fixture(scope="session")
def rdb():
    return running_db(seed=3)


@pytest.fixture(scope="session")
def rexamples(rdb):
    return labeled(rdb, [1, 2, 3], 60, seed=5, prefixes=True)
