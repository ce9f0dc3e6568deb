import pytest

from spsrecon.model import FaultSet
from spsrecon.scenario import load_fixture


@pytest.fixture(scope="session")
def spec6():
    return load_fixture("six_zone")


@pytest.fixture(scope="session")
def spec2():
    return load_fixture("two_zone")


@pytest.fixture(scope="session")
def benchmark_faults():
    # the multi-fault study scenario: port bus broken at both ends of the hull
    return FaultSet.of("pb:1-2", "pb:5-6")
