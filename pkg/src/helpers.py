import json
import math
import logging
import concurrent.futures as cf
from dataclasses import dataclass, field, asdict
from typing import Any, Callable, Dict, Iterator, List, Sequence, Tuple

import numpy as np

import settings


logger = logging.getLogger(__name__)


#---------------ERRORS------------------------#

class PostedPriceError(Exception):
    """Root of every error raised by the library."""


class DistributionError(PostedPriceError, ValueError):
    """A distribution (or distribution file) violates its invariants."""


class InstanceError(PostedPriceError, ValueError):
    """An auction instance or feasibility constraint is malformed."""


class FeasibilityError(PostedPriceError):
    """The operation is not defined for the instance's feasibility kind."""


class MatroidOracleError(PostedPriceError):
    """An independence oracle is not downward-closed."""

    def __init__(self, superset: frozenset, subset: frozenset):
        self.superset = superset
        self.subset = subset
        super().__init__(
            f"oracle accepts {sorted(superset)} but rejects its subset {sorted(subset)}"
        )


class BudgetExceededError(PostedPriceError):
    """Exact enumeration would visit more profiles than allowed."""

    def __init__(self, kind: str, required: int, budget: int):
        self.kind = kind
        self.required = required
        self.budget = budget
        super().__init__(f"{kind} enumeration needs {required} profiles, budget is {budget}")


class InvariantError(PostedPriceError):
    """An internal invariant was broken."""


class BoundError(PostedPriceError, ValueError):
    """A bound was given invalid input or failed its proven inequality."""


#---------------SHARED TYPES------------------------#

@dataclass(frozen=True)
class PriceVector:
    """
    Per-bidder posted prices (SPM) or reserves (ESP).

    Parameters
    ----------
    prices : Tuple[float, ...]
        One finite, non-negative price per bidder.
    label : str
        Provenance of the prices: ``myersonian``, ``uniform`` or ``custom``.
    """
    prices: Tuple[float, ...]
    label: str = "custom"

    def __post_init__(self):
        prices = tuple(float(p) for p in self.prices)
        if not all(math.isfinite(p) and p >= 0 for p in prices):
            raise InstanceError(f"prices must be finite and non-negative, got {prices}")
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return len(self.prices)

    def __getitem__(self, i: int) -> float:
        return self.prices[i]

    @classmethod
    def uniform(cls, price: float, n: int) -> "PriceVector":
        return cls(tuple([price] * n), label="uniform")

    @classmethod
    def from_thresholds(cls, thresholds: Sequence[float], tops: Sequence[float]) -> "PriceVector":
        """
        Builds Myersonian prices from thresholds. A threshold of +inf (the bidder
        can never win the optimal auction) becomes a price just above the top of
        that bidder's support, so it is never accepted.
        """
        prices = [
            t if math.isfinite(t) else float(np.nextafter(top, math.inf))
            for t, top in zip(thresholds, tops)
        ]
        return cls(tuple(prices), label="myersonian")


@dataclass(frozen=True)
class MechanismOutcome:
    winners: Tuple[int, ...]
    payments: Tuple[float, ...]
    revenue: float
    tag: str

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class RevenueEstimate:
    """Expected revenue of a mechanism, either exact or a Monte-Carlo mean."""
    mean: float
    stderr: float
    trials: int
    exact: bool = False

    @classmethod
    def exact_value(cls, value: float) -> "RevenueEstimate":
        return cls(mean=float(value), stderr=0.0, trials=0, exact=True)

    @classmethod
    def from_moments(cls, chunks: Sequence[Tuple[float, float, int]]) -> "RevenueEstimate":
        total = sum(c[0] for c in chunks)
        squares = sum(c[1] for c in chunks)
        trials = sum(c[2] for c in chunks)
        mean = total / trials
        variance = max(squares / trials - mean * mean, 0.0)
        stderr = math.sqrt(variance / max(trials - 1, 1))
        return cls(mean=mean, stderr=stderr, trials=trials)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


#---------------MONTE-CARLO CHUNKS------------------------#

def chunk_sizes(trials: int, chunks: int) -> List[int]:
    base, extra = divmod(trials, chunks)
    return [base + (1 if c < extra else 0) for c in range(chunks)]


def run_chunked(
    fn: Callable[[int, np.random.Generator], Any],
    trials: int,
    rng: np.random.Generator,
    chunks: int = None,
    jobs: int = None,
) -> List[Any]:
    """
    Splits ``trials`` into a fixed number of chunks, each with its own child
    stream spawned from ``rng``, and evaluates ``fn(size, stream)`` per chunk.

    Results come back in chunk order, so the reduction is the same for every
    worker count.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    chunks = chunks or settings.MC_CHUNKS
    jobs = jobs or settings.JOBS
    streams = rng.spawn(chunks)
    sizes = chunk_sizes(trials, chunks)
    work = [(size, stream) for size, stream in zip(sizes, streams) if size > 0]
    if jobs == 1:
        return [fn(size, stream) for size, stream in work]
    with cf.ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(lambda job: fn(*job), work))


#---------------ENUMERATION------------------------#

@dataclass(frozen=True)
class EnumerationBudget:
    """
    Caps on exact enumeration.

    ``max_profiles`` bounds value-profile enumeration; ``max_threshold_profiles``
    bounds the product of per-bidder threshold supports (times value profiles
    when both are enumerated together).
    """
    max_profiles: int = field(default_factory=lambda: settings.PROFILE_BUDGET)
    max_threshold_profiles: int = field(default_factory=lambda: settings.THRESHOLD_BUDGET)

    def __post_init__(self):
        if self.max_profiles < 1 or self.max_threshold_profiles < 1:
            raise ValueError("enumeration budgets must be positive")

    def require_profiles(self, count: int) -> None:
        if count > self.max_profiles:
            raise BudgetExceededError("value-profile", count, self.max_profiles)

    def require_thresholds(self, count: int) -> None:
        if count > self.max_threshold_profiles:
            raise BudgetExceededError("threshold-profile", count, self.max_threshold_profiles)


def profile_count(sizes: Sequence[int]) -> int:
    return math.prod(sizes)


def iter_profile_chunks(
    supports: Sequence[np.ndarray],
    probs: Sequence[np.ndarray],
    chunk_size: int = 1 << 16,
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Yields ``(values, weights)`` blocks covering the product space of the given
    per-coordinate supports in lexicographic order. ``values`` has one row per
    profile and ``weights`` holds the product probabilities.
    """
    shape = tuple(len(s) for s in supports)
    total = profile_count(shape)
    for start in range(0, total, chunk_size):
        flat = np.arange(start, min(start + chunk_size, total))
        index = np.unravel_index(flat, shape) if shape else ()
        values = np.column_stack([s[ix] for s, ix in zip(supports, index)]) if shape else np.zeros((1, 0))
        weights = np.ones(len(flat))
        for p, ix in zip(probs, index):
            weights = weights * p[ix]
        yield values, weights
