import math
import logging
from itertools import chain, combinations
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

from dist_core import DiscreteDistribution
from helpers import InstanceError, MatroidOracleError


logger = logging.getLogger(__name__)


def powerset(iterable: Iterable):
    s = list(iterable)
    return chain.from_iterable(combinations(s, r) for r in range(len(s) + 1))


@dataclass(frozen=True)
class KUnit:
    """At most ``H`` winners; ``H > n`` behaves as ``H = n``."""
    H: int

    def validate(self, n: int) -> None:
        if self.H < 1:
            raise InstanceError(f"feasibility.H: must be a positive integer, got {self.H}")

    def cap(self, n: int) -> int:
        return min(self.H, n)

    def competition(self, i: int, n: int) -> Tuple[Tuple[int, ...], int]:
        return tuple(j for j in range(n) if j != i), self.H

    def can_add(self, winners: Sequence[int], i: int) -> bool:
        return len(winners) < self.H


@dataclass(frozen=True)
class Partition:
    """Disjoint groups covering every bidder, each with its own capacity."""
    groups: Tuple[Tuple[int, ...], ...]
    caps: Tuple[int, ...]
    membership: Dict[int, int] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "caps", tuple(int(c) for c in self.caps))
        object.__setattr__(self, "membership", {i: g for g, members in enumerate(groups) for i in members})

    def validate(self, n: int) -> None:
        if len(self.groups) != len(self.caps):
            raise InstanceError("feasibility.caps: one cap per group is required")
        for g, cap in enumerate(self.caps):
            if cap < 1:
                raise InstanceError(f"feasibility.caps.{g}: must be a positive integer")
        flat = [i for g in self.groups for i in g]
        if sorted(flat) != list(range(n)):
            raise InstanceError(f"feasibility.groups: must cover bidders 0..{n - 1} exactly once")

    def group_of(self, i: int) -> int:
        return self.membership[i]

    def competition(self, i: int, n: int) -> Tuple[Tuple[int, ...], int]:
        g = self.group_of(i)
        return tuple(j for j in self.groups[g] if j != i), self.caps[g]

    def can_add(self, winners: Sequence[int], i: int) -> bool:
        g = self.group_of(i)
        return sum(1 for j in winners if self.membership[j] == g) < self.caps[g]


@dataclass(frozen=True)
class PositionAuction:
    """Slots with weakly decreasing click-through-rates, one per bidder."""
    alphas: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))

    def validate(self, n: int) -> None:
        if len(self.alphas) != n:
            raise InstanceError(f"alphas: expected {n} click-through-rates, got {len(self.alphas)}")
        for j, a in enumerate(self.alphas):
            if not math.isfinite(a) or a <= 0:
                raise InstanceError(f"alphas.{j}: must be positive")
        for j in range(1, n):
            if self.alphas[j] > self.alphas[j - 1]:
                raise InstanceError(f"alphas.{j}: click-through-rates must be weakly decreasing")

    @property
    def layer_weights(self) -> Tuple[float, ...]:
        """``alpha_j - alpha_{j+1}`` with ``alpha_{n+1} = 0``."""
        padded = self.alphas + (0.0,)
        return tuple(padded[j] - padded[j + 1] for j in range(len(self.alphas)))


class MatroidOracle:
    """
    Feasibility given by an independence test over bidder index sets.

    Parameters
    ----------
    independent : Callable[[FrozenSet[int]], bool]
        Returns True when the set of bidders may win together.
    name : str
        Label used in reports.
    spec : dict, optional
        Serializable description (e.g. the partition it was built from).
    groups : Partition, optional
        The partition behind ``MatroidOracle.partition``; validated against n.
    """
    def __init__(
        self,
        independent: Callable[[FrozenSet[int]], bool],
        name: str = "oracle",
        spec: Optional[dict] = None,
        groups: Optional[Partition] = None,
    ):
        self._independent = independent
        self.name = name
        self.spec = spec or {}
        self.groups = groups
        self._cache: Dict[FrozenSet[int], bool] = {}

    def __repr__(self) -> str:
        return f"MatroidOracle(name={self.name!r})"

    @classmethod
    def partition(cls, groups: Sequence[Sequence[int]], caps: Sequence[int]) -> "MatroidOracle":
        partition = Partition(tuple(tuple(g) for g in groups), tuple(caps))

        def independent(subset: FrozenSet[int]) -> bool:
            counts = [0] * len(partition.caps)
            for i in subset:
                counts[partition.group_of(i)] += 1
            return all(c <= cap for c, cap in zip(counts, partition.caps))

        spec = {"groups": [list(g) for g in partition.groups], "caps": list(partition.caps)}
        return cls(independent, name="partition", spec=spec, groups=partition)

    @classmethod
    def uniform(cls, H: int) -> "MatroidOracle":
        return cls(lambda subset: len(subset) <= H, name=f"uniform-{H}", spec={"H": H})

    def validate(self, n: int) -> None:
        if self.groups is not None:
            self.groups.validate(n)
        if not self.is_independent(frozenset()):
            raise InstanceError("feasibility: the empty set must be independent")

    def is_independent(self, subset: Iterable[int]) -> bool:
        key = frozenset(subset)
        if key not in self._cache:
            self._cache[key] = bool(self._independent(key))
        return self._cache[key]

    def can_add(self, winners: Sequence[int], i: int) -> bool:
        return self.is_independent(frozenset(winners) | {i})

    def check_downward_closed(self, n: int) -> None:
        """Exhaustively checks that every subset of an independent set is independent."""
        for subset in powerset(range(n)):
            superset = frozenset(subset)
            if not self.is_independent(superset):
                continue
            for j in superset:
                smaller = superset - {j}
                if not self.is_independent(smaller):
                    raise MatroidOracleError(superset, smaller)
        logger.debug(f"oracle {self.name} is downward-closed on {n} bidders")


FeasibilityConstraint = Union[KUnit, Partition, PositionAuction, MatroidOracle]


@dataclass(frozen=True)
class AuctionInstance:
    """Independent bidders with known value distributions and a feasibility constraint."""
    bidders: Tuple[DiscreteDistribution, ...]
    feasibility: FeasibilityConstraint = KUnit(1)

    def __post_init__(self):
        object.__setattr__(self, "bidders", tuple(self.bidders))
        if len(self.bidders) < 1:
            raise InstanceError("bidders: at least one bidder is required")
        self.feasibility.validate(self.n)

    @property
    def n(self) -> int:
        return len(self.bidders)

    @property
    def tops(self) -> Tuple[float, ...]:
        return tuple(d.top for d in self.bidders)

    @property
    def is_single_unit(self) -> bool:
        return isinstance(self.feasibility, KUnit) and self.feasibility.cap(self.n) == 1

    def with_feasibility(self, feasibility: FeasibilityConstraint) -> "AuctionInstance":
        return AuctionInstance(self.bidders, feasibility)

    def restrict(self, indices: Sequence[int], feasibility: FeasibilityConstraint) -> "AuctionInstance":
        return AuctionInstance(tuple(self.bidders[i] for i in indices), feasibility)
