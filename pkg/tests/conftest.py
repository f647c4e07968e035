import pytest

from ergolab import systems


@pytest.fixture(scope="session")
def doubling():
    return systems.doubling_family()


@pytest.fixture(scope="session")
def triangle():
    return systems.triangle_family(1)


@pytest.fixture(scope="session")
def q1():
    return systems.mostly_expanding_family()


@pytest.fixture(scope="session")
def control():
    return systems.two_arc_control()


@pytest.fixture(scope="session")
def perturbed():
    return systems.perturbed_doubling_family(0.01)


@pytest.fixture(scope="session")
def rotations():
    return systems.rotation_family()
