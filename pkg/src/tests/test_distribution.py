import json
import math

import numpy as np
import pytest
from scipy import stats

from dist_core import (
    DiscreteDistribution,
    distribution_from_dict,
    iron,
    load_distribution,
    monopoly_price,
    monopoly_revenue,
    point_mass,
    poisson_binomial_pmf,
    raw_virtual_values,
    sample,
    truncated_mean,
    uniform_grid,
)
from helpers import DistributionError


def test_cdf_and_survival(coin):
    assert coin.cdf(0.5) == 0.0
    assert coin.cdf(1.0) == 0.5
    assert coin.cdf(1.5) == 0.5
    assert coin.cdf(2.0) == 1.0
    assert coin.survival(1.0) == 1.0
    assert coin.survival(1.5) == 0.5
    assert coin.survival(2.5) == 0.0
    assert np.allclose(coin.survival_many(np.array([0.0, 1.0, 1.2, 2.0, 3.0])), [1, 1, 0.5, 0.5, 0])


def test_probs_are_renormalized():
    d = DiscreteDistribution((0.0, 1.0, 2.0), (0.3, 0.3, 0.4 + 5e-13))
    assert math.fsum(d.probs) == pytest.approx(1.0, abs=1e-15)
    assert d.cumulative[-1] == 1.0


@pytest.mark.parametrize(
    "support, probs, field",
    [
        ((), (), "support"),
        ((1.0, 2.0), (1.0,), "probs"),
        ((2.0, 1.0), (0.5, 0.5), "support.1"),
        ((1.0, 1.0), (0.5, 0.5), "support.1"),
        ((-1.0, 1.0), (0.5, 0.5), "support.0"),
        ((1.0, 2.0), (0.0, 1.0), "probs.0"),
        ((1.0, 2.0), (0.5, 0.6), "probs"),
    ],
)
def test_invalid_distributions_name_the_field(support, probs, field):
    with pytest.raises(DistributionError, match=field.replace(".", r"\.")):
        DiscreteDistribution(support, probs)


def test_raw_virtual_values_on_uniform_grid():
    m = 20
    d = uniform_grid(0, 1, m)
    phi = dict(raw_virtual_values(d))
    for v in d.support[:-1]:
        assert phi[v] == pytest.approx(2 * v - 1 + 0.5 / m, abs=1e-12)
    assert phi[d.top] == d.top


def test_regular_distribution_is_not_ironed():
    d = uniform_grid(0, 2, 20)
    ironed = iron(d)
    assert ironed.monotone
    assert ironed.ironed == ironed.raw
    assert ironed(0.05) == pytest.approx(2 * 0.05 - 2 + 0.05, abs=1e-12)


def test_ironing_pools_the_dip(irregular):
    ironed = iron(irregular)
    assert not ironed.monotone
    assert ironed.raw == pytest.approx((-0.5, -3.0, 1.25, 10.0))
    assert ironed.ironed == pytest.approx((-1.0, -1.0, 1.25, 10.0))
    assert np.all(np.diff(ironed.array) >= 0)


def test_ironed_value_is_step_function(irregular):
    ironed = iron(irregular)
    assert ironed(0.5) == -math.inf
    assert ironed(2.5) == pytest.approx(-1.0)
    assert ironed(9.99) == pytest.approx(1.25)
    assert ironed(50.0) == pytest.approx(10.0)


def test_monopoly_price(irregular, coin):
    assert monopoly_price(irregular) == (3.0, pytest.approx(1.5))
    # 1 * 1 and 2 * 0.5 tie; the lower price wins
    assert monopoly_price(coin) == (1.0, pytest.approx(1.0))
    assert monopoly_revenue(point_mass(4.0)) == 4.0


def test_uniform_grid_midpoints():
    d = uniform_grid(0, 2, 20)
    assert d.support[0] == pytest.approx(0.05)
    assert d.support[-1] == pytest.approx(1.95)
    assert d.mean() == pytest.approx(1.0)
    with pytest.raises(DistributionError):
        uniform_grid(1, 1, 5)


def test_sample_matches_distribution(irregular, rng):
    draws = sample(irregular, rng, size=20_000)
    reference = np.repeat(irregular.values, np.round(np.array(irregular.probs) * 20_000).astype(int))
    result = stats.ks_2samp(draws, reference)
    assert result.pvalue > 1e-3


def test_sample_is_reproducible(irregular):
    a = sample(irregular, np.random.default_rng(5), size=100)
    b = sample(irregular, np.random.default_rng(5), size=100)
    assert np.array_equal(a, b)
    assert sample(point_mass(2.5), np.random.default_rng(0)) == 2.5


def test_poisson_binomial_matches_binomial():
    pmf = poisson_binomial_pmf(np.full(6, 0.3))
    assert np.allclose(pmf, stats.binom.pmf(np.arange(7), 6, 0.3), atol=1e-14)


def test_poisson_binomial_batched():
    probs = np.array([[0.1, 0.9, 0.5], [1.0, 0.0, 0.5]])
    pmf = poisson_binomial_pmf(probs)
    assert pmf.shape == (2, 4)
    assert np.allclose(pmf.sum(axis=1), 1.0)
    assert np.allclose(pmf[1], [0.0, 0.5, 0.5, 0.0])


def test_truncated_mean():
    pmf = stats.binom.pmf(np.arange(5), 4, 0.5)
    assert truncated_mean(pmf, 4) == pytest.approx(2.0)
    assert truncated_mean(pmf, 1) == pytest.approx(1 - 0.5 ** 4)


def test_distribution_file_round_trip(tmp_path, irregular):
    path = tmp_path / "d.json"
    path.write_text(json.dumps({"support": list(irregular.support), "probs": list(irregular.probs)}))
    loaded = load_distribution(path)
    assert loaded.support == irregular.support
    assert loaded.probs == pytest.approx(irregular.probs, abs=1e-15)


def test_distribution_file_errors(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"support": [1, 2],\n "probs": [0.5 0.5]}')
    with pytest.raises(DistributionError, match="line 2"):
        load_distribution(path)
    with pytest.raises(DistributionError, match="probs"):
        distribution_from_dict({"support": [1, 2]})
    with pytest.raises(DistributionError, match="weights"):
        distribution_from_dict({"support": [1], "probs": [1], "weights": [1]})
