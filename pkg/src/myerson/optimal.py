import math
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Literal, Sequence, Tuple

import numpy as np

from dist_core import iron, sample
from helpers import FeasibilityError, MechanismOutcome, PriceVector
from .instance import AuctionInstance, KUnit, MatroidOracle, Partition, PositionAuction


logger = logging.getLogger(__name__)

TieBreak = Literal["low", "high"]


@dataclass(frozen=True)
class ThresholdSample:
    """
    Re-sampled thresholds ``t'_i``, one per bidder, each computed against a
    fresh opponent profile.

    Attributes
    ----------
    thresholds : Tuple[float, ...]
        ``t'_i``; +inf when bidder i cannot win against its resampled opponents.
    opponents : Tuple[Tuple[float, ...], ...]
        The resampled ``v'_{-i}`` for every i, in increasing opponent index order.
    """
    thresholds: Tuple[float, ...]
    opponents: Tuple[Tuple[float, ...], ...]

    def prices(self, instance: AuctionInstance) -> PriceVector:
        return PriceVector.from_thresholds(self.thresholds, instance.tops)


class OptimalAuction:
    """
    Myerson's optimal auction on a discrete instance.

    Winners are the bidders with the highest non-negative ironed virtual values
    subject to feasibility, ranked by ironed value and then by index (lower
    index first for ``tie_break="low"``, higher first for ``"high"``). Raw
    values never break ironed ties: a bidder's allocation must stay constant
    across each ironed interval, otherwise revenue falls below the ironed
    virtual surplus. A bidder whose ironed virtual value is exactly zero is
    allocated. Winners pay their threshold: the smallest own support value at
    which they still win.

    Methods
    -------
    __call__(values) -> MechanismOutcome:
        Allocation and threshold payments for one value profile.
    allocate(values) -> Tuple[int, ...]:
        Winning bidders, sorted by index.
    threshold(i, values) -> float:
        Threshold of bidder i against ``values`` (own entry ignored).
    thresholds_batch(i, opponents) -> np.ndarray:
        Thresholds of bidder i for each row of an opponent matrix.
    """
    def __init__(self, instance: AuctionInstance, tie_break: TieBreak = "low"):
        if isinstance(instance.feasibility, PositionAuction):
            raise FeasibilityError(
                "position auctions decompose into k-unit layers; use position_auction.pa_optimal"
            )
        if tie_break not in ("low", "high"):
            raise ValueError(f"tie_break must be 'low' or 'high', got {tie_break!r}")
        self.instance = instance
        self.tie_break = tie_break
        self.virtuals = [iron(d) for d in instance.bidders]
        self.phis = [v.array for v in self.virtuals]
        self.supports = [d.values for d in instance.bidders]

    @property
    def n(self) -> int:
        return self.instance.n

    def virtual_value(self, i: int, v: float) -> float:
        return self.virtuals[i](v)

    def virtual_values_many(self, i: int, values: np.ndarray) -> np.ndarray:
        j = np.searchsorted(self.supports[i], values, side="right") - 1
        phi = np.where(j >= 0, self.phis[i][np.maximum(j, 0)], -np.inf)
        return phi

    def _rank(self, j: int, phi: float) -> Tuple[float, int]:
        return (-phi, j if self.tie_break == "low" else -j)

    def allocate(self, values: Sequence[float]) -> Tuple[int, ...]:
        phi = [self.virtual_value(j, values[j]) for j in range(self.n)]
        order = sorted((j for j in range(self.n) if phi[j] >= 0), key=lambda j: self._rank(j, phi[j]))
        feasibility = self.instance.feasibility
        winners: List[int] = []
        for j in order:
            if feasibility.can_add(winners, j):
                winners.append(j)
        return tuple(sorted(winners))

    def _favored(self, i: int, competitors: Sequence[int]) -> np.ndarray:
        if self.tie_break == "low":
            return np.array([j < i for j in competitors], dtype=bool)
        return np.array([j > i for j in competitors], dtype=bool)

    def thresholds_batch(self, i: int, opponents: np.ndarray) -> np.ndarray:
        """
        Thresholds of bidder ``i`` for many opponent profiles at once.

        ``opponents`` has shape ``(rows, n - 1)`` and lists the other bidders in
        increasing index order.
        """
        opponents = np.atleast_2d(np.asarray(opponents, dtype=np.float64))
        others = [j for j in range(self.n) if j != i]
        feasibility = self.instance.feasibility
        if isinstance(feasibility, MatroidOracle):
            return np.array([self._scan_threshold(i, row, others) for row in opponents])

        competitors, cap = feasibility.competition(i, self.n)
        phi_i = self.phis[i]
        rows = opponents.shape[0]
        if competitors:
            columns = [others.index(j) for j in competitors]
            comp = np.column_stack(
                [self.virtual_values_many(j, opponents[:, c]) for j, c in zip(competitors, columns)]
            )
            favored = self._favored(i, competitors)
            # beats[r, s, c]: competitor c outranks bidder i at own support point s
            beats = (comp[:, None, :] > phi_i[None, :, None]) | (
                (comp[:, None, :] == phi_i[None, :, None]) & favored[None, None, :]
            )
            wins = (phi_i[None, :] >= 0) & (beats.sum(axis=2) < cap)
        else:
            wins = np.broadcast_to(phi_i[None, :] >= 0, (rows, len(phi_i)))
        first = np.argmax(wins, axis=1)
        found = wins[np.arange(rows), first]
        return np.where(found, self.supports[i][first], np.inf)

    def _scan_threshold(self, i: int, opponent_row: Sequence[float], others: Sequence[int]) -> float:
        profile = [0.0] * self.n
        for j, v in zip(others, opponent_row):
            profile[j] = v
        for v in self.instance.bidders[i].support:
            profile[i] = v
            if i in self.allocate(profile):
                return v
        return math.inf

    def threshold(self, i: int, values: Sequence[float]) -> float:
        opponents = [values[j] for j in range(self.n) if j != i]
        return float(self.thresholds_batch(i, np.array([opponents]))[0])

    def __call__(self, values: Sequence[float]) -> MechanismOutcome:
        winners = self.allocate(values)
        payments = [0.0] * self.n
        for i in winners:
            payments[i] = self.threshold(i, values)
        return MechanismOutcome(
            winners=winners,
            payments=tuple(payments),
            revenue=float(sum(payments)),
            tag="optimal",
        )

    def resample(self, rng: np.random.Generator) -> ThresholdSample:
        thresholds, opponents = [], []
        for i in range(self.n):
            row = tuple(float(sample(self.instance.bidders[j], rng)) for j in range(self.n) if j != i)
            thresholds.append(float(self.thresholds_batch(i, np.array([row]))[0]))
            opponents.append(row)
        return ThresholdSample(tuple(thresholds), tuple(opponents))

    def resample_matrix(self, rng: np.random.Generator, rows: int) -> np.ndarray:
        """``rows`` independent draws of the re-sampled threshold vector, shape ``(rows, n)``."""
        out = np.empty((rows, self.n))
        for i in range(self.n):
            draws = [sample(self.instance.bidders[j], rng, size=rows) for j in range(self.n) if j != i]
            opponents = np.column_stack(draws) if draws else np.zeros((rows, 0))
            out[:, i] = self.thresholds_batch(i, opponents)
        return out


@lru_cache(maxsize=128)
def optimal_auction(instance: AuctionInstance, tie_break: TieBreak = "low") -> OptimalAuction:
    return OptimalAuction(instance, tie_break)


def myerson_allocate(
    instance: AuctionInstance, values: Sequence[float], tie_break: TieBreak = "low"
) -> MechanismOutcome:
    """Runs the optimal auction on one value profile (k-unit, partition or oracle feasibility)."""
    return optimal_auction(instance, tie_break)(values)


def threshold(
    instance: AuctionInstance, i: int, opponent_values: Sequence[float], tie_break: TieBreak = "low"
) -> float:
    """
    Smallest support value of bidder ``i`` that wins against ``opponent_values``
    (the other bidders in increasing index order); +inf if none wins.
    """
    auction = optimal_auction(instance, tie_break)
    return float(auction.thresholds_batch(i, np.array([list(opponent_values)], dtype=np.float64))[0])


def resample_thresholds(
    instance: AuctionInstance, rng: np.random.Generator, tie_break: TieBreak = "low"
) -> ThresholdSample:
    """Draws fresh opponents for every bidder and returns the independent thresholds ``t'_i``."""
    return optimal_auction(instance, tie_break).resample(rng)
