import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

import factor_lp
from dist_core import poisson_binomial_pmf, sample, truncated_mean
from helpers import FeasibilityError, MechanismOutcome, PriceVector, RevenueEstimate, run_chunked
from myerson import AuctionInstance, KUnit, MatroidOracle, Partition, optimal_auction, powerset
from myerson.optimal import TieBreak
from .utilities import (
    PriceSearch,
    acceptance_matrix,
    best_support_point,
    require_kunit,
    require_offer_feasibility,
    support_union,
)


logger = logging.getLogger(__name__)


class SequentialPostedPrice:
    """
    Sequential posted-price mechanism for a fixed price vector.

    Bidders are approached in decreasing price order, lower index first among
    equal prices. A bidder is offered its price only if adding it keeps the
    current winner set feasible, and accepts iff its value is at least the price.

    Methods
    -------
    __call__(values) -> MechanismOutcome:
        Runs the mechanism on one value profile.
    offers(values) -> List[int]:
        Bidders actually offered a price, in offer order.
    """
    def __init__(self, instance: AuctionInstance, prices: PriceVector):
        if len(prices) != instance.n:
            raise ValueError(f"expected {instance.n} prices, got {len(prices)}")
        self.instance = instance
        self.prices = prices
        self.feasibility = require_offer_feasibility(instance)
        self.order = sorted(range(instance.n), key=lambda i: (-prices[i], i))

    def _run(self, values: Sequence[float]) -> Tuple[List[int], List[int]]:
        winners, offered = [], []
        for i in self.order:
            if not self.feasibility.can_add(winners, i):
                continue
            offered.append(i)
            if values[i] >= self.prices[i]:
                winners.append(i)
        return winners, offered

    def offers(self, values: Sequence[float]) -> List[int]:
        return self._run(values)[1]

    def __call__(self, values: Sequence[float]) -> MechanismOutcome:
        winners, _ = self._run(values)
        payments = [0.0] * self.instance.n
        for i in winners:
            payments[i] = self.prices[i]
        return MechanismOutcome(
            winners=tuple(sorted(winners)),
            payments=tuple(payments),
            revenue=float(sum(payments)),
            tag=f"spm:{self.prices.label}",
        )


def run_spm(instance: AuctionInstance, prices: PriceVector, values: Sequence[float]) -> MechanismOutcome:
    return SequentialPostedPrice(instance, prices)(values)


def _capped_sequence_revenue(prices: Sequence[float], accepts: Sequence[float], cap: int) -> float:
    # sold[c] = P[c units sold before the current offer]
    sold = np.zeros(cap + 1)
    sold[0] = 1.0
    revenue = 0.0
    for p, a in zip(prices, accepts):
        open_mass = sold[:cap]
        revenue += p * a * float(open_mass.sum())
        moved = open_mass * a
        sold[:cap] = open_mass * (1 - a)
        sold[1:] += moved
    return revenue


def expected_spm_revenue(instance: AuctionInstance, prices: PriceVector) -> float:
    """
    Exact expected revenue of the SPM with fixed prices over the value
    distributions: a dynamic program over units sold for k-unit and partition
    feasibility, and enumeration of accept patterns for oracles.
    """
    mechanism = SequentialPostedPrice(instance, prices)
    accepts = [d.survival(p) for d, p in zip(instance.bidders, prices.prices)]
    f = mechanism.feasibility
    if isinstance(f, KUnit):
        order = mechanism.order
        return _capped_sequence_revenue(
            [prices[i] for i in order], [accepts[i] for i in order], f.cap(instance.n)
        )
    if isinstance(f, Partition):
        total = 0.0
        for members, cap in zip(f.groups, f.caps):
            order = [i for i in mechanism.order if i in members]
            total += _capped_sequence_revenue([prices[i] for i in order], [accepts[i] for i in order], cap)
        return total
    total = 0.0
    for accepted in powerset(range(instance.n)):
        accepted = set(accepted)
        weight = 1.0
        for i in range(instance.n):
            weight *= accepts[i] if i in accepted else 1 - accepts[i]
        if weight == 0:
            continue
        indicator = [prices[i] if i in accepted else -1.0 for i in range(instance.n)]
        total += weight * mechanism(indicator).revenue
    return total


def _myersonian_chunks(instance: AuctionInstance, trials: int, rng: np.random.Generator, tie_break: TieBreak):
    auction = optimal_auction(instance, tie_break)
    tops = instance.tops

    def chunk(size: int, stream: np.random.Generator):
        thresholds = auction.resample_matrix(stream, size)
        values = np.column_stack([sample(d, stream, size=size) for d in instance.bidders])
        revenues = np.empty(size)
        for r in range(size):
            prices = PriceVector.from_thresholds(thresholds[r], tops)
            revenues[r] = run_spm(instance, prices, values[r]).revenue
        return float(revenues.sum()), float(revenues @ revenues), size

    return run_chunked(chunk, trials, rng)


def myersonian_spm_revenue(
    instance: AuctionInstance, trials: int, rng: np.random.Generator, tie_break: TieBreak = "low"
) -> RevenueEstimate:
    """
    Monte-Carlo MP: every trial draws a value profile and an independent
    re-sampled threshold vector, posts the thresholds as prices and records the
    SPM revenue.
    """
    estimate = RevenueEstimate.from_moments(_myersonian_chunks(instance, trials, rng, tie_break))
    logger.info(f"MP estimate {estimate.mean:.6f} +- {estimate.stderr:.6f} over {trials} trials")
    return estimate


def uniform_price_search(instance: AuctionInstance) -> PriceSearch:
    """
    Best uniform posted price for a k-unit instance.

    Revenue at price p is ``p * E[min(#{i: v_i >= p}, H)]``. Acceptance
    probabilities are step functions that only change at support points and the
    revenue grows linearly in p between them, so the support-point union holds
    a maximizer. Ties resolve to the lowest price.
    """
    cap = require_kunit(instance, "uniform pricing")
    candidates = support_union(instance)
    pmf = poisson_binomial_pmf(acceptance_matrix(instance, candidates))
    revenues = candidates * truncated_mean(pmf, cap)
    return best_support_point(candidates, revenues)


class BestSpm(NamedTuple):
    revenue: float
    label: str
    myersonian: RevenueEstimate
    uniform: PriceSearch


def best_spm_revenue(
    instance: AuctionInstance,
    trials: int,
    rng: np.random.Generator,
    myersonian: Optional[RevenueEstimate] = None,
) -> BestSpm:
    """
    ``max(MP, UP)`` with the label of the better arm. A precomputed (e.g. exact)
    MP may be passed in place of the Monte-Carlo estimate.
    """
    mp = myersonian or myersonian_spm_revenue(instance, trials, rng)
    up = uniform_price_search(instance)
    if mp.mean >= up.revenue:
        return BestSpm(mp.mean, "myersonian", mp, up)
    return BestSpm(up.revenue, "uniform", mp, up)


@dataclass(frozen=True)
class GroupSpm:
    members: Tuple[int, ...]
    cap: int
    revenue: float
    label: str
    factor: float


@dataclass(frozen=True)
class PartitionSpm:
    revenue: float
    groups: Tuple[GroupSpm, ...]
    guarantee: float


def partition_spm(instance: AuctionInstance, trials: int, rng: np.random.Generator) -> PartitionSpm:
    """
    SPM under a partition matroid as independent per-group ``H_i``-unit SPMs.
    The certified factor is the smallest per-group ``1/LP-SPM(H_i)``.
    """
    f = instance.feasibility
    if not isinstance(f, Partition):
        raise FeasibilityError("partition_spm needs partition feasibility")
    streams = rng.spawn(len(f.groups))
    groups = []
    for members, cap, stream in zip(f.groups, f.caps, streams):
        sub = instance.restrict(members, KUnit(cap))
        best = best_spm_revenue(sub, trials, stream)
        factor = factor_lp.solve_lp_spm_H(cap).factor
        groups.append(GroupSpm(tuple(members), cap, best.revenue, best.label, factor))
    return PartitionSpm(
        revenue=float(sum(g.revenue for g in groups)),
        groups=tuple(groups),
        guarantee=min(g.factor for g in groups),
    )


def matroid_myersonian_spm(
    instance: AuctionInstance, trials: int, rng: np.random.Generator, check_limit: int = 12
) -> RevenueEstimate:
    """
    Myersonian SPM under an independence oracle. Thresholds come from the
    optimal auction's greedy-by-ironed-virtual-value allocation on the same
    oracle. The oracle is checked for downward-closure first when the instance
    has at most ``check_limit`` bidders.
    """
    f = instance.feasibility
    if not isinstance(f, MatroidOracle):
        raise FeasibilityError("matroid_myersonian_spm needs an independence oracle")
    if instance.n <= check_limit:
        f.check_downward_closed(instance.n)
    return myersonian_spm_revenue(instance, trials, rng)
