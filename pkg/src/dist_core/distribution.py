import math
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.isotonic import IsotonicRegression

from helpers import DistributionError


logger = logging.getLogger(__name__)

PROB_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=True)
class DiscreteDistribution:
    """
    A bidder's value distribution with finite support.

    Attributes
    ----------
    support : Tuple[float, ...]
        Strictly increasing, non-negative value points.
    probs : Tuple[float, ...]
        Matching probabilities, each positive. They must sum to one within
        1e-12 and are renormalized exactly on construction.

    Methods
    -------
    values / pmf:
        Read-only numpy views of support and probabilities.
    cdf(v) -> float:
        P[V <= v].
    survival(v) -> float:
        P[V >= v].
    """
    support: Tuple[float, ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        support = tuple(float(v) for v in self.support)
        probs = tuple(float(p) for p in self.probs)
        if len(support) == 0:
            raise DistributionError("support: must not be empty")
        if len(support) != len(probs):
            raise DistributionError(
                f"probs: length {len(probs)} does not match support length {len(support)}"
            )
        for j, v in enumerate(support):
            if not math.isfinite(v) or v < 0:
                raise DistributionError(f"support.{j}: value {v} is not finite and non-negative")
        for j in range(1, len(support)):
            if support[j] <= support[j - 1]:
                raise DistributionError(f"support.{j}: support must be strictly increasing")
        for j, p in enumerate(probs):
            if not math.isfinite(p) or p <= 0:
                raise DistributionError(f"probs.{j}: probability {p} must be positive")
        total = math.fsum(probs)
        if abs(total - 1.0) > PROB_TOLERANCE:
            raise DistributionError(f"probs: sum to {total!r}, expected 1 within {PROB_TOLERANCE}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", tuple(p / total for p in probs))

    def __len__(self) -> int:
        return len(self.support)

    @cached_property
    def values(self) -> np.ndarray:
        arr = np.array(self.support, dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def pmf(self) -> np.ndarray:
        arr = np.array(self.probs, dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def cumulative(self) -> np.ndarray:
        arr = np.cumsum(self.pmf)
        arr[-1] = 1.0
        arr.setflags(write=False)
        return arr

    @cached_property
    def tail(self) -> np.ndarray:
        """P[V >= v_j] for every support point, summed from the top."""
        arr = np.cumsum(self.pmf[::-1])[::-1].copy()
        arr[0] = 1.0
        arr.setflags(write=False)
        return arr

    @property
    def top(self) -> float:
        return self.support[-1]

    def cdf(self, v: float) -> float:
        j = int(np.searchsorted(self.values, v, side="right"))
        return 0.0 if j == 0 else float(self.cumulative[j - 1])

    def survival(self, v: float) -> float:
        j = int(np.searchsorted(self.values, v, side="left"))
        return 0.0 if j == len(self) else float(self.tail[j])

    def survival_many(self, prices: np.ndarray) -> np.ndarray:
        """Vectorized P[V >= p] over an array of prices."""
        j = np.searchsorted(self.values, prices, side="left")
        padded = np.append(self.tail, 0.0)
        return padded[j]

    def mean(self) -> float:
        return float(self.values @ self.pmf)


@dataclass(frozen=True)
class IronedVirtualFunction:
    """
    Ironed virtual values at each support point.

    ``raw`` holds the unironed discrete virtual values and ``monotone`` records
    whether they were already weakly increasing (a regular distribution), in
    which case ``ironed`` equals ``raw``.
    """
    support: Tuple[float, ...]
    ironed: Tuple[float, ...]
    raw: Tuple[float, ...]
    monotone: bool

    @property
    def breakpoints(self) -> List[Tuple[float, float]]:
        return list(zip(self.support, self.ironed))

    @cached_property
    def array(self) -> np.ndarray:
        arr = np.array(self.ironed, dtype=np.float64)
        arr.setflags(write=False)
        return arr

    def __call__(self, v: float) -> float:
        """Ironed virtual value at the largest support point not above ``v``; -inf below the support."""
        j = int(np.searchsorted(np.asarray(self.support), v, side="right"))
        return -math.inf if j == 0 else self.ironed[j - 1]


def cdf(dist: DiscreteDistribution, v: float) -> float:
    return dist.cdf(v)


def _revenue_curve_slopes(dist: DiscreteDistribution) -> np.ndarray:
    # Left-derivative of R(q) = q * v(q) at q_j = P[V >= v_j]; moving from
    # q_{j+1} to q_j adds mass p_j at price v_j.
    v, p = dist.values, dist.pmf
    above = np.append(dist.tail[1:], 0.0)
    gaps = np.append(np.diff(v), 0.0)
    return v - gaps * above / p


def raw_virtual_values(dist: DiscreteDistribution) -> List[Tuple[float, float]]:
    """
    Discrete virtual values ``phi(v_j) = v_j - (1 - F(v_j)) (v_{j+1} - v_j) / p_j``
    with ``phi(v_last) = v_last``.
    """
    return list(zip(dist.support, _revenue_curve_slopes(dist).tolist()))


def iron(dist: DiscreteDistribution) -> IronedVirtualFunction:
    """
    Irons the virtual values of ``dist``.

    The ironed values are the left-derivatives of the upper concave envelope of
    the revenue curve in quantile space. On the support grid this is the
    probability-weighted isotonic (increasing) regression of the raw virtual
    values, which pools exactly the adjacent segments the envelope bridges.

    Parameters
    ----------
    dist : DiscreteDistribution
        Any valid distribution, regular or not.

    Returns
    -------
    IronedVirtualFunction
        Weakly increasing ironed values, identical to the raw values when the
        distribution is regular.
    """
    raw = _revenue_curve_slopes(dist)
    monotone = bool(np.all(np.diff(raw) >= 0))
    if monotone:
        ironed = raw
    else:
        model = IsotonicRegression(increasing=True)
        ironed = model.fit_transform(dist.values, raw, sample_weight=dist.pmf)
        logger.debug(f"ironed {int(np.sum(ironed != raw))} of {len(raw)} virtual values")
    return IronedVirtualFunction(
        support=dist.support,
        ironed=tuple(float(x) for x in ironed),
        raw=tuple(float(x) for x in raw),
        monotone=monotone,
    )


def sample(
    dist: DiscreteDistribution, rng: np.random.Generator, size: Optional[int] = None
) -> Union[float, np.ndarray]:
    """Draws support points with their probabilities; deterministic given the generator state."""
    if len(dist) == 1:
        return dist.support[0] if size is None else np.full(size, dist.support[0])
    return rng.choice(dist.values, size=size, p=dist.pmf)


def uniform_grid(a: float, b: float, m: int) -> DiscreteDistribution:
    """Discretizes uniform[a, b] into ``m`` equally likely interval midpoints."""
    if m < 1 or not b > a:
        raise DistributionError(f"uniform grid needs m >= 1 and b > a, got m={m}, [{a}, {b}]")
    width = (b - a) / m
    support = [a + (j + 0.5) * width for j in range(m)]
    return DiscreteDistribution(tuple(support), tuple([1.0 / m] * m))


def point_mass(c: float) -> DiscreteDistribution:
    return DiscreteDistribution((c,), (1.0,))


def monopoly_price(dist: DiscreteDistribution) -> Tuple[float, float]:
    """
    Revenue-maximizing take-it-or-leave-it price over the support and its
    revenue ``v * P[V >= v]``. Ties go to the lowest price.
    """
    revenues = dist.values * dist.tail
    best = float(revenues.max())
    j = int(np.argmax(revenues >= best * (1 - 1e-12)))
    return dist.support[j], float(revenues[j])


def monopoly_revenue(dist: DiscreteDistribution) -> float:
    return monopoly_price(dist)[1]


def poisson_binomial_pmf(probabilities: Union[Sequence[float], np.ndarray]) -> np.ndarray:
    """
    Distribution of the number of successes among independent Bernoulli trials.

    Accepts a 1-D vector or a batch of shape ``(..., n)`` and returns a pmf of
    shape ``(..., n + 1)`` computed by successive convolution.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    pmf = np.zeros(probs.shape[:-1] + (probs.shape[-1] + 1,))
    pmf[..., 0] = 1.0
    for i in range(probs.shape[-1]):
        p = probs[..., i : i + 1]
        shifted = np.concatenate([np.zeros(pmf.shape[:-1] + (1,)), pmf[..., :-1]], axis=-1)
        pmf = pmf * (1 - p) + shifted * p
    return pmf


def truncated_mean(pmf: np.ndarray, cap: int) -> np.ndarray:
    """E[min(Y, cap)] for a pmf over 0..len-1 (batched over leading axes)."""
    counts = np.minimum(np.arange(pmf.shape[-1]), cap)
    return pmf @ counts
