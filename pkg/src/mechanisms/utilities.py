from typing import List, NamedTuple, Sequence

import numpy as np

from helpers import FeasibilityError
from myerson import AuctionInstance, FeasibilityConstraint, KUnit, PositionAuction


class PriceSearch(NamedTuple):
    price: float
    revenue: float


def require_offer_feasibility(instance: AuctionInstance) -> FeasibilityConstraint:
    if isinstance(instance.feasibility, PositionAuction):
        raise FeasibilityError("position auctions run one k-unit mechanism per layer; use position_auction.pa_spm")
    return instance.feasibility


def require_kunit(instance: AuctionInstance, what: str) -> int:
    if not isinstance(instance.feasibility, KUnit):
        raise FeasibilityError(f"{what} is defined for k-unit feasibility only")
    return instance.feasibility.cap(instance.n)


def require_single_unit(instance: AuctionInstance, what: str) -> None:
    if not instance.is_single_unit:
        raise FeasibilityError(f"{what} is defined for single-unit instances only")


def greedy_max_weight(
    feasibility: FeasibilityConstraint, candidates: Sequence[int], values: Sequence[float]
) -> List[int]:
    """
    Max-weight feasible subset of ``candidates`` by greedy insertion in
    decreasing value order (lower index first on ties). Exact for matroids.
    """
    chosen: List[int] = []
    for i in sorted(candidates, key=lambda j: (-values[j], j)):
        if feasibility.can_add(chosen, i):
            chosen.append(i)
    return chosen


def best_support_point(candidates: np.ndarray, revenues: np.ndarray) -> PriceSearch:
    """Maximizer over candidate prices, lowest price on ties."""
    best = float(revenues.max())
    j = int(np.argmax(revenues >= best - 1e-12 * max(abs(best), 1.0)))
    return PriceSearch(float(candidates[j]), float(revenues[j]))


def support_union(instance: AuctionInstance) -> np.ndarray:
    points = set()
    for d in instance.bidders:
        points.update(d.support)
    return np.array(sorted(points))


def acceptance_matrix(instance: AuctionInstance, prices: np.ndarray) -> np.ndarray:
    """``P[v_i >= p]`` with one row per price and one column per bidder."""
    return np.column_stack([d.survival_many(prices) for d in instance.bidders])
