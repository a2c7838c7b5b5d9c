import numpy as np
import pytest

from funasm.hilbert import Field, unit_square_space


@pytest.fixture(scope="session")
def space33():
    return unit_square_space(33)


@pytest.fixture(scope="session")
def space17():
    return unit_square_space(17)


def random_field(space, rng):
    return Field(space, rng.standard_normal(space.n_nodes))


def random_fields(space, rng, count):
    return [random_field(space, rng) for _ in range(count)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
