import numpy as np
import pytest

from stolzcalc.geometry import UnimodularVertexSet


@pytest.fixture(scope="session")
def E1():
    return UnimodularVertexSet([1.0])


@pytest.fixture(scope="session")
def E2():
    return UnimodularVertexSet([1.0, -1.0])


@pytest.fixture(scope="session")
def E3():
    return UnimodularVertexSet([1.0, np.exp(2j * np.pi / 3), np.exp(-2j * np.pi / 3)])


@pytest.fixture(scope="session")
def vertex_sets(E1, E2, E3):
    return [E1, E2, E3]
