import itertools

import numpy as np
import pytest

import factor_lp
from dist_core import DiscreteDistribution, uniform_grid
from helpers import FeasibilityError, PriceVector, RevenueEstimate
from mechanisms import (
    EagerSecondPrice,
    SequentialPostedPrice,
    best_spm_revenue,
    esp_revenues,
    expected_esp_revenue,
    expected_spm_revenue,
    matroid_myersonian_spm,
    myersonian_esp_revenue,
    myersonian_spm_revenue,
    partition_spm,
    run_esp,
    run_spm,
    uniform_esp_search,
    uniform_price_search,
)
from myerson import AuctionInstance, KUnit, MatroidOracle, Partition, PositionAuction


def brute_force(instance, mechanism):
    total = 0.0
    for profile in itertools.product(*(zip(d.support, d.probs) for d in instance.bidders)):
        values = [v for v, _ in profile]
        weight = np.prod([p for _, p in profile])
        total += weight * mechanism(values).revenue
    return total


@pytest.fixture
def three_bidders():
    return (
        DiscreteDistribution((1.0, 2.0, 4.0), (0.5, 0.3, 0.2)),
        DiscreteDistribution((0.5, 3.0), (0.6, 0.4)),
        uniform_grid(0, 3, 4),
    )


def test_spm_offers_in_decreasing_price_order(three_bidders):
    instance = AuctionInstance(three_bidders)
    prices = PriceVector((2.0, 3.0, 3.0))
    mechanism = SequentialPostedPrice(instance, prices)
    assert mechanism.order == [1, 2, 0]
    outcome = mechanism([5.0, 5.0, 5.0])
    assert outcome.winners == (1,)
    assert outcome.revenue == 3.0
    assert mechanism.offers([5.0, 5.0, 5.0]) == [1]
    assert mechanism.offers([5.0, 1.0, 1.0]) == [1, 2, 0]
    assert run_spm(instance, prices, [5.0, 1.0, 1.0]).payments == (2.0, 0.0, 0.0)


def test_spm_accepts_at_equality(three_bidders):
    instance = AuctionInstance(three_bidders, KUnit(2))
    outcome = run_spm(instance, PriceVector((1.0, 3.0, 0.5)), [1.0, 3.0, 0.5])
    assert outcome.winners == (0, 1)
    assert outcome.tag == "spm:custom"


def test_spm_respects_partition_caps(three_bidders):
    instance = AuctionInstance(three_bidders, Partition(((0, 1), (2,)), (1, 1)))
    outcome = run_spm(instance, PriceVector.uniform(1.0, 3), [4.0, 4.0, 4.0])
    assert outcome.winners == (0, 2)


def test_esp_charges_the_runner_up_or_the_reserve(three_bidders):
    instance = AuctionInstance(three_bidders)
    reserves = PriceVector.uniform(1.0, 3)
    assert run_esp(instance, reserves, [5.0, 3.0, 0.5]).payments == (3.0, 0.0, 0.0)
    assert run_esp(instance, reserves, [5.0, 0.5, 0.2]).payments == (1.0, 0.0, 0.0)
    assert run_esp(instance, reserves, [0.5, 0.5, 0.2]).winners == ()


def test_esp_multi_unit_payments_are_externalities(three_bidders):
    instance = AuctionInstance(three_bidders, KUnit(2))
    outcome = EagerSecondPrice(instance, PriceVector.uniform(0.0, 3))([5.0, 4.0, 3.0])
    assert outcome.winners == (0, 1)
    assert outcome.payments == (3.0, 3.0, 0.0)
    # bidder 2 is dropped by its reserve, so nobody competes for the second unit
    outcome = EagerSecondPrice(instance, PriceVector((0.0, 0.0, 3.5)))([5.0, 4.0, 3.0])
    assert outcome.payments == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("feasibility", [KUnit(1), KUnit(2), Partition(((0, 2), (1,)), (1, 1)), MatroidOracle.uniform(2)])
def test_expected_spm_revenue_matches_enumeration(three_bidders, feasibility):
    instance = AuctionInstance(three_bidders, feasibility)
    for prices in [(1.0, 0.5, 0.375), (2.0, 3.0, 1.875), (4.0, 0.5, 2.0), (1.5, 1.5, 1.5)]:
        prices = PriceVector(prices)
        expected = brute_force(instance, SequentialPostedPrice(instance, prices))
        assert expected_spm_revenue(instance, prices) == pytest.approx(expected, abs=1e-12)


def test_expected_esp_revenue_matches_enumeration(three_bidders):
    for H in (1, 2):
        instance = AuctionInstance(three_bidders, KUnit(H))
        reserves = PriceVector((1.0, 2.0, 0.375))
        expected = brute_force(instance, EagerSecondPrice(instance, reserves))
        assert expected_esp_revenue(instance, reserves) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("H", [1, 2, 3])
def test_uniform_price_beats_a_dense_grid(three_bidders, H):
    instance = AuctionInstance(three_bidders, KUnit(H))
    best = uniform_price_search(instance)
    assert expected_spm_revenue(instance, PriceVector.uniform(best.price, 3)) == pytest.approx(best.revenue)
    for p in np.linspace(0, 4.5, 451):
        assert expected_spm_revenue(instance, PriceVector.uniform(p, 3)) <= best.revenue + 1e-12


def test_uniform_esp_reserve_beats_a_dense_grid(three_bidders):
    instance = AuctionInstance(three_bidders)
    best = uniform_esp_search(instance)
    assert expected_esp_revenue(instance, PriceVector.uniform(best.price, 3)) == pytest.approx(best.revenue)
    for p in np.linspace(0, 4.5, 451):
        assert expected_esp_revenue(instance, PriceVector.uniform(p, 3)) <= best.revenue + 1e-12


def test_uniform_searches_on_coins(two_coins):
    assert uniform_price_search(two_coins) == (2.0, pytest.approx(1.5))
    assert uniform_esp_search(two_coins) == (2.0, pytest.approx(1.5))


def test_myersonian_estimates_cover_the_exact_value(two_coins, rng):
    mp = myersonian_spm_revenue(two_coins, 4000, rng)
    me = myersonian_esp_revenue(two_coins, 4000, rng)
    assert mp.trials == me.trials == 4000
    assert abs(mp.mean - 1.25) <= 4 * mp.stderr
    assert abs(me.mean - 1.25) <= 4 * me.stderr


def test_myersonian_estimate_is_reproducible(two_uniform):
    a = myersonian_spm_revenue(two_uniform, 300, np.random.default_rng(3))
    b = myersonian_spm_revenue(two_uniform, 300, np.random.default_rng(3))
    assert a == b


def test_best_spm_takes_the_better_arm(two_coins, rng):
    exact_mp = RevenueEstimate.exact_value(1.25)
    best = best_spm_revenue(two_coins, 10, rng, myersonian=exact_mp)
    assert best.label == "uniform"
    assert best.revenue == pytest.approx(1.5)
    assert best.myersonian is exact_mp
    esp = esp_revenues(two_coins, 10, rng, myersonian=RevenueEstimate.exact_value(1.6))
    assert (esp.best, esp.label) == (1.6, "myersonian")


def test_partition_spm_runs_groups_independently(three_bidders, rng):
    instance = AuctionInstance(three_bidders, Partition(((0, 1), (2,)), (1, 1)))
    result = partition_spm(instance, 500, rng)
    assert [g.members for g in result.groups] == [(0, 1), (2,)]
    assert result.revenue == pytest.approx(sum(g.revenue for g in result.groups))
    assert result.guarantee == pytest.approx(factor_lp.solve_lp_spm_H(1).factor)
    # at least the monopoly revenue of the lone bidder
    assert result.groups[1].revenue >= 1.875 * 0.5 - 1e-12


def test_oracle_spm_matches_partition_spm(three_bidders):
    groups, caps = ((0, 1), (2,)), (1, 1)
    plain = AuctionInstance(three_bidders, Partition(groups, caps))
    oracle = AuctionInstance(three_bidders, MatroidOracle.partition(groups, caps))
    a = myersonian_spm_revenue(plain, 400, np.random.default_rng(11))
    b = matroid_myersonian_spm(oracle, 400, np.random.default_rng(11))
    assert a.mean == pytest.approx(b.mean, abs=1e-12)


def test_mechanisms_reject_unsupported_feasibility(three_bidders, rng):
    positions = AuctionInstance(three_bidders, PositionAuction((1.0, 0.6, 0.2)))
    with pytest.raises(FeasibilityError):
        run_spm(positions, PriceVector.uniform(1.0, 3), [1.0, 1.0, 1.0])
    with pytest.raises(FeasibilityError):
        run_esp(positions, PriceVector.uniform(1.0, 3), [1.0, 1.0, 1.0])
    with pytest.raises(FeasibilityError):
        uniform_price_search(AuctionInstance(three_bidders, Partition(((0, 1, 2),), (2,))))
    with pytest.raises(FeasibilityError):
        uniform_esp_search(AuctionInstance(three_bidders, KUnit(2)))
    with pytest.raises(FeasibilityError):
        partition_spm(AuctionInstance(three_bidders), 10, rng)
