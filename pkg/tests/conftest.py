import pytest

from structh2 import (EXAMPLE1_X0, example1_perf, example1_plant,
                      example1_subspace, simulate)


@pytest.fixture(scope="session")
def plant():
    return example1_plant()


@pytest.fixture(scope="session")
def perf():
    return example1_perf()


@pytest.fixture(scope="session")
def subspace():
    return example1_subspace()


@pytest.fixture(scope="session")
def batch(plant):
    """Seeded benchmark batch with the tight noise bound, T=20, eps=0.1."""
    b, _ = simulate(plant, EXAMPLE1_X0, None, 0.1, seed=1, exponent=2, T=20)
    return b
