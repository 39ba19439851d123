import json
import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from dist_core import DiscreteDistribution, sample, uniform_grid
from helpers import FeasibilityError, InstanceError, MatroidOracleError
from myerson import (
    AuctionInstance,
    KUnit,
    MatroidOracle,
    Partition,
    PositionAuction,
    OptimalAuction,
    exact_s_curve,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    mc_s_curve,
    myerson_allocate,
    resample_thresholds,
    threshold,
)


def test_coin_profiles_follow_ironed_ranking(two_coins):
    assert myerson_allocate(two_coins, [1.0, 1.0]).payments == (1.0, 0.0)
    assert myerson_allocate(two_coins, [1.0, 2.0]).payments == (0.0, 2.0)
    assert myerson_allocate(two_coins, [2.0, 1.0]).payments == (1.0, 0.0)
    outcome = myerson_allocate(two_coins, [2.0, 2.0])
    assert outcome.winners == (0,)
    assert outcome.revenue == 2.0
    assert outcome.tag == "optimal"


def test_high_tie_break_favors_later_bidders(two_coins):
    outcome = myerson_allocate(two_coins, [2.0, 2.0], tie_break="high")
    assert outcome.winners == (1,)
    assert outcome.payments == (0.0, 2.0)


def test_zero_virtual_value_is_allocated(coin):
    single = AuctionInstance((coin,))
    assert myerson_allocate(single, [1.0]).revenue == 1.0


def test_negative_ironed_value_is_not_allocated(irregular):
    single = AuctionInstance((irregular,))
    assert myerson_allocate(single, [2.0]).winners == ()
    assert myerson_allocate(single, [3.0]).payments == (3.0,)
    assert myerson_allocate(single, [10.0]).payments == (3.0,)


def test_thresholds_on_two_uniform_grids(two_uniform):
    low = two_uniform.bidders[0].support
    high = two_uniform.bidders[1].support
    # bidder 0 needs phi >= 0 and to beat 2 v_2 - 1.95
    assert threshold(two_uniform, 0, [high[0]]) == low[10]
    assert threshold(two_uniform, 0, [high[10]]) == low[11]
    assert threshold(two_uniform, 0, [high[19]]) == math.inf
    assert threshold(two_uniform, 1, [low[16]]) == high[13]


def test_threshold_is_the_smallest_winning_value(two_uniform):
    auction = OptimalAuction(two_uniform)
    for v2 in two_uniform.bidders[1].support:
        t = auction.threshold(0, [0.0, v2])
        for v1 in two_uniform.bidders[0].support:
            assert (0 in auction.allocate([v1, v2])) == (v1 >= t)


def test_k_unit_allocation():
    d = uniform_grid(0, 1, 10)
    instance = AuctionInstance((d, d, d), KUnit(2))
    v = d.support
    outcome = myerson_allocate(instance, [v[9], v[3], v[7]])
    assert outcome.winners == (0, 2)
    # bidder 1 has negative phi, so both winners pay the reserve
    assert outcome.payments[2] == pytest.approx(v[5])
    assert outcome.payments[0] == pytest.approx(v[5])


def test_partition_and_partition_oracle_agree(rng):
    d = uniform_grid(0, 1, 5)
    groups, caps = ((0, 1), (2, 3)), (1, 1)
    plain = AuctionInstance((d,) * 4, Partition(groups, caps))
    oracle = AuctionInstance((d,) * 4, MatroidOracle.partition(groups, caps))
    a, b = OptimalAuction(plain), OptimalAuction(oracle)
    for _ in range(200):
        values = rng.choice(d.values, size=4).tolist()
        assert a(values) == b(values)


def test_partition_thresholds_only_see_the_group():
    d = uniform_grid(0, 1, 10)
    instance = AuctionInstance((d, d, d), Partition(((0, 1), (2,)), (1, 1)))
    assert threshold(instance, 2, [d.top, d.top]) == d.support[5]


def test_partition_oracle_must_cover_every_bidder(coin):
    with pytest.raises(InstanceError, match="groups"):
        AuctionInstance((coin, coin), MatroidOracle.partition([[0]], [1]))
    with pytest.raises(InstanceError, match="groups"):
        AuctionInstance((coin, coin), MatroidOracle.partition([[0, 1], [1]], [1, 1]))
    with pytest.raises(InstanceError, match="caps"):
        AuctionInstance((coin, coin), MatroidOracle.partition([[0], [1]], [1]))


def test_oracle_must_be_downward_closed():
    broken = MatroidOracle(lambda s: len(s) != 1, name="broken")
    with pytest.raises(MatroidOracleError) as info:
        broken.check_downward_closed(2)
    assert len(info.value.superset) == 2
    MatroidOracle.uniform(2).check_downward_closed(4)


def test_position_auctions_are_layered_elsewhere(coin):
    instance = AuctionInstance((coin, coin), PositionAuction((1.0, 0.5)))
    with pytest.raises(FeasibilityError):
        myerson_allocate(instance, [1.0, 2.0])


@pytest.mark.parametrize(
    "feasibility",
    [KUnit(0), Partition(((0,),), (1,)), Partition(((0, 1),), (0,)), PositionAuction((0.5, 1.0)), PositionAuction((1.0,))],
)
def test_invalid_feasibility(coin, feasibility):
    with pytest.raises(InstanceError):
        AuctionInstance((coin, coin), feasibility)


def test_resampled_thresholds_come_from_the_marginals(two_coins, rng):
    draws = [resample_thresholds(two_coins, rng) for _ in range(50)]
    assert {d.thresholds[0] for d in draws} <= {1.0, 2.0}
    assert {d.thresholds[1] for d in draws} <= {2.0, math.inf}
    prices = draws[0].prices(two_coins)
    assert all(math.isfinite(p) for p in prices.prices)
    assert prices.label == "myersonian"


@pytest.mark.slow
def test_resampled_thresholds_match_in_distribution(rng):
    grid = uniform_grid(0, 1, 10)
    auction = OptimalAuction(AuctionInstance((grid, grid, grid), KUnit(1)))
    draws = 10_000
    resampled = np.array([resample_thresholds(auction.instance, rng).thresholds for _ in range(draws)])
    values = np.column_stack([sample(grid, rng, size=draws) for _ in range(3)])
    cap = grid.top + 1.0
    for i in range(3):
        direct = auction.thresholds_batch(i, np.delete(values, i, axis=1))
        result = ks_2samp(np.minimum(resampled[:, i], cap), np.minimum(direct, cap))
        assert result.pvalue > 0.01, (i, result)


def test_s_curve_integrates_to_opt(two_uniform):
    curve = exact_s_curve(two_uniform)
    assert curve.step_integral() == pytest.approx(curve.opt, abs=1e-9)
    assert all(b <= a + 1e-12 for a, b in zip(curve.s, curve.s[1:]))
    assert curve.s[0] <= 1.0 + 1e-12


def test_s_curve_for_coins(two_coins):
    curve = exact_s_curve(two_coins)
    assert curve.opt == pytest.approx(1.5)
    assert dict(zip(curve.grid, curve.s)) == pytest.approx({0.0: 1.0, 1.0: 1.0, 2.0: 0.5})


def test_monte_carlo_s_curve_tracks_exact(two_uniform, rng):
    exact = exact_s_curve(two_uniform, grid=[0.0, 0.5, 0.75, 1.0, 1.25])
    estimate = mc_s_curve(two_uniform, exact.grid, 4000, rng)
    assert np.all(np.diff(estimate.s) <= 1e-12)
    assert estimate.s == pytest.approx(exact.s, abs=0.05)
    assert set(estimate.to_frame().columns) == {"tau", "s", "provenance", "raw"}


@pytest.mark.slow
def test_monte_carlo_s_curve_within_three_sigma(rng):
    d = DiscreteDistribution((1.0, 2.0, 3.0), (0.3, 0.4, 0.3))
    instance = AuctionInstance((d, d, d))
    exact = exact_s_curve(instance)
    estimate = mc_s_curve(instance, exact.grid, 100_000, rng)
    s = np.asarray(exact.s)
    sigma = np.sqrt(s * (1 - s) / estimate.samples)
    assert np.all(np.abs(np.asarray(estimate.raw) - s) <= 3 * sigma + 1e-12)


def test_instance_file(tmp_path):
    data = {
        "bidders": [{"support": [1, 2], "probs": [0.5, 0.5]}, {"support": [1, 3], "probs": [0.25, 0.75]}],
        "feasibility": {"kind": "position"},
        "alphas": [1.0, 0.4],
    }
    path = tmp_path / "pa.json"
    path.write_text(json.dumps(data))
    instance = load_instance(path)
    assert instance.feasibility == PositionAuction((1.0, 0.4))
    assert instance.feasibility.layer_weights == pytest.approx((0.6, 0.4))
    again = instance_from_dict(instance_to_dict(instance))
    assert again.bidders == instance.bidders


def test_instance_file_errors_name_the_field():
    data = {"bidders": [{"support": [1], "probs": [1]}, {"support": [1, 2], "probs": [0.5, 0.2]}]}
    with pytest.raises(Exception, match=r"bidders\.1\."):
        instance_from_dict(data)
    with pytest.raises(InstanceError, match="alphas"):
        instance_from_dict({"bidders": data["bidders"][:1], "feasibility": {"kind": "position"}})


def test_matroid_instance_file():
    data = {
        "bidders": [{"support": [1], "probs": [1]}] * 3,
        "feasibility": {"kind": "matroid", "partition": {"groups": [[0, 1], [2]], "caps": [1, 1]}},
    }
    instance = instance_from_dict(data)
    assert isinstance(instance.feasibility, MatroidOracle)
    assert myerson_allocate(instance, [1.0, 1.0, 1.0]).winners == (0, 2)


def test_matroid_file_with_uncovered_bidders_is_rejected():
    data = {
        "bidders": [{"support": [1], "probs": [1]}] * 2,
        "feasibility": {"kind": "matroid", "partition": {"groups": [[0]], "caps": [1]}},
    }
    with pytest.raises(InstanceError, match="groups"):
        instance_from_dict(data)
