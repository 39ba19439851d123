import numpy as np
import pytest

from dist_core import DiscreteDistribution, uniform_grid
from myerson import AuctionInstance, KUnit


@pytest.fixture
def coin():
    return DiscreteDistribution((1.0, 2.0), (0.5, 0.5))


@pytest.fixture
def two_coins(coin):
    return AuctionInstance((coin, coin), KUnit(1))


@pytest.fixture
def two_uniform():
    """U[0,1] and U[0,2] discretized into 20 midpoints each, one unit."""
    return AuctionInstance((uniform_grid(0, 1, 20), uniform_grid(0, 2, 20)), KUnit(1))


@pytest.fixture
def irregular():
    # bimodal: raw virtual values dip in the middle and need ironing
    return DiscreteDistribution((1.0, 2.0, 3.0, 10.0), (0.4, 0.1, 0.4, 0.1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
