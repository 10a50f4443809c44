import logging

import pytest

from elrp.instance import load_bundled
from elrp.pten import expand

# triangle-inequality warnings are expected on randomized geometries
logging.getLogger("elrp.instance").setLevel(logging.ERROR)
logging.getLogger("elrp.pten").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def toy():
    return load_bundled("toy")


@pytest.fixture(scope="session")
def toy_graph(toy):
    return expand(toy)


@pytest.fixture(scope="session")
def small_base():
    return load_bundled("small_base")


@pytest.fixture(scope="session")
def small_base_graph(small_base):
    return expand(small_base)


@pytest.fixture(scope="session")
def small_tw():
    return load_bundled("small_tw")
