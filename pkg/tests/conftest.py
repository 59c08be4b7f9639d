import math

import pytest

from modalflow.basis import dirichlet_interval, make_basis, periodic_interval, periodic_square


@pytest.fixture(scope="session")
def trig7():
    return make_basis(periodic_interval(), "real-trig", 3)


@pytest.fixture(scope="session")
def sine5():
    return make_basis(dirichlet_interval(), "sine", 5)


@pytest.fixture(scope="session")
def burgers_basis():
    return make_basis(dirichlet_interval(-math.pi, math.pi), "sine", 5, nodes=128, quadrature="uniform")


@pytest.fixture(scope="session")
def square25():
    return make_basis(periodic_square(), "tensor-trig-2d")
