import logging
from typing import NamedTuple, Optional, Sequence

import numpy as np

from dist_core import poisson_binomial_pmf, sample
from helpers import EnumerationBudget, MechanismOutcome, PriceVector, RevenueEstimate, iter_profile_chunks, profile_count, run_chunked
from myerson import AuctionInstance, optimal_auction
from myerson.optimal import TieBreak
from .utilities import (
    PriceSearch,
    acceptance_matrix,
    best_support_point,
    greedy_max_weight,
    require_offer_feasibility,
    require_single_unit,
    support_union,
)


logger = logging.getLogger(__name__)


class EagerSecondPrice:
    """
    Eager second-price auction with personalized reserves.

    Bidders below their reserve are dropped first. Among the survivors S the
    max-value feasible set S* wins, and winner i pays
    ``max(p_i, W(S*_{-i}) - (W(S*) - v_i))`` where ``S*_{-i}`` is the max-value
    feasible subset of ``S \\ {i}`` and W sums values.
    """
    def __init__(self, instance: AuctionInstance, reserves: PriceVector):
        if len(reserves) != instance.n:
            raise ValueError(f"expected {instance.n} reserves, got {len(reserves)}")
        self.instance = instance
        self.reserves = reserves
        self.feasibility = require_offer_feasibility(instance)

    def __call__(self, values: Sequence[float]) -> MechanismOutcome:
        survivors = [i for i in range(self.instance.n) if values[i] >= self.reserves[i]]
        chosen = greedy_max_weight(self.feasibility, survivors, values)
        welfare = sum(values[i] for i in chosen)
        payments = [0.0] * self.instance.n
        for i in chosen:
            others = greedy_max_weight(self.feasibility, [j for j in survivors if j != i], values)
            externality = sum(values[j] for j in others) - (welfare - values[i])
            payments[i] = max(self.reserves[i], externality)
        return MechanismOutcome(
            winners=tuple(sorted(chosen)),
            payments=tuple(float(p) for p in payments),
            revenue=float(sum(payments)),
            tag=f"esp:{self.reserves.label}",
        )


def run_esp(instance: AuctionInstance, reserves: PriceVector, values: Sequence[float]) -> MechanismOutcome:
    return EagerSecondPrice(instance, reserves)(values)


def _single_unit_revenues(values: np.ndarray, reserves: np.ndarray) -> np.ndarray:
    eligible = np.where(values >= reserves[None, :], values, -np.inf)
    winner = np.argmax(eligible, axis=1)
    rows = np.arange(len(values))
    sold = np.isfinite(eligible[rows, winner])
    rest = eligible.copy()
    rest[rows, winner] = -np.inf
    second = rest.max(axis=1) if values.shape[1] > 1 else np.full(len(values), -np.inf)
    pay = np.maximum(reserves[winner], second)
    return np.where(sold, pay, 0.0)


def expected_esp_revenue(
    instance: AuctionInstance, reserves: PriceVector, budget: Optional[EnumerationBudget] = None
) -> float:
    """Exact expected ESP revenue for fixed reserves by value-profile enumeration."""
    budget = budget or EnumerationBudget()
    budget.require_profiles(profile_count([len(d) for d in instance.bidders]))
    supports = [d.values for d in instance.bidders]
    probs = [d.pmf for d in instance.bidders]
    r = np.asarray(reserves.prices)
    mechanism = EagerSecondPrice(instance, reserves)
    parts = []
    for values, weights in iter_profile_chunks(supports, probs):
        if instance.is_single_unit:
            revenues = _single_unit_revenues(values, r)
        else:
            revenues = np.array([mechanism(row.tolist()).revenue for row in values])
        parts.append(revenues * weights)
    return float(np.sum(np.concatenate(parts)))


def uniform_esp_search(instance: AuctionInstance) -> PriceSearch:
    """
    Best uniform reserve for the single-unit ESP.

    The objective ``E[max(p, v_(2)) 1{v_(1) >= p}]`` equals
    ``p P[v_(1) >= p] + E[(v_(2) - p)^+]``. Between consecutive support points
    the first term is linear with slope ``P[v_(1) >= p]`` and the second falls
    at the smaller rate ``P[v_(2) >= p]``, so a support point maximizes it.
    """
    require_single_unit(instance, "uniform ESP")
    candidates = support_union(instance)
    pmf = poisson_binomial_pmf(acceptance_matrix(instance, candidates))
    top = 1.0 - pmf[:, 0]
    second = np.clip(1.0 - pmf[:, 0] - pmf[:, 1], 0.0, 1.0) if instance.n > 1 else np.zeros(len(candidates))
    # E[(v_(2) - x_j)^+] = sum_{k > j} (x_k - x_{k-1}) P[v_(2) >= x_k]
    pieces = np.append(np.diff(candidates) * second[1:], 0.0)
    excess = np.cumsum(pieces[::-1])[::-1]
    revenues = candidates * top + excess
    return best_support_point(candidates, revenues)


def myersonian_esp_revenue(
    instance: AuctionInstance, trials: int, rng: np.random.Generator, tie_break: TieBreak = "low"
) -> RevenueEstimate:
    """Monte-Carlo ME: ESP with re-sampled thresholds as reserves."""
    auction = optimal_auction(instance, tie_break)
    tops = instance.tops

    def chunk(size: int, stream: np.random.Generator):
        thresholds = auction.resample_matrix(stream, size)
        values = np.column_stack([sample(d, stream, size=size) for d in instance.bidders])
        revenues = np.empty(size)
        for row in range(size):
            reserves = PriceVector.from_thresholds(thresholds[row], tops)
            revenues[row] = run_esp(instance, reserves, values[row]).revenue
        return float(revenues.sum()), float(revenues @ revenues), size

    estimate = RevenueEstimate.from_moments(run_chunked(chunk, trials, rng))
    logger.info(f"ME estimate {estimate.mean:.6f} +- {estimate.stderr:.6f} over {trials} trials")
    return estimate


class EspRevenues(NamedTuple):
    myersonian: RevenueEstimate
    uniform: PriceSearch
    best: float
    label: str


def esp_revenues(
    instance: AuctionInstance,
    trials: int,
    rng: np.random.Generator,
    myersonian: Optional[RevenueEstimate] = None,
) -> EspRevenues:
    """ME (Monte-Carlo unless given), exact UE, and the better of the two for a single-unit instance."""
    require_single_unit(instance, "ESP revenue evaluation")
    me = myersonian or myersonian_esp_revenue(instance, trials, rng)
    ue = uniform_esp_search(instance)
    if me.mean >= ue.revenue:
        return EspRevenues(me, ue, me.mean, "myersonian")
    return EspRevenues(me, ue, ue.revenue, "uniform")
