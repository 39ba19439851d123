import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.isotonic import IsotonicRegression

from dist_core import sample
from helpers import EnumerationBudget, InvariantError, iter_profile_chunks, profile_count, run_chunked
from .instance import AuctionInstance
from .optimal import TieBreak, optimal_auction


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SCurve:
    """
    Tabulated ``s(tau)``: the expected number of optimal-auction winners paying at
    least ``tau``, summed over bidders.

    ``provenance`` is ``exact`` or ``monte-carlo``; Monte-Carlo curves keep the
    unregularized estimate in ``raw`` and the sample count in ``samples``.
    Exact curves carry the enumerated optimal revenue in ``opt``.
    """
    grid: Tuple[float, ...]
    s: Tuple[float, ...]
    provenance: str
    samples: int = 0
    raw: Optional[Tuple[float, ...]] = None
    opt: Optional[float] = None

    def __post_init__(self):
        if len(self.grid) != len(self.s):
            raise InvariantError("s-curve grid and values differ in length")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise InvariantError("s-curve grid must be strictly increasing")
        if any(b > a + 1e-12 for a, b in zip(self.s, self.s[1:])):
            raise InvariantError("s-curve must be weakly decreasing")

    def step_integral(self) -> float:
        """Integral of the left-continuous step function through the grid points, from 0."""
        grid = np.asarray(self.grid)
        widths = np.diff(np.concatenate([[0.0], grid]))
        return float(np.sum(widths * np.asarray(self.s)))

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"tau": self.grid, "s": self.s})
        df["provenance"] = self.provenance if not self.samples else f"{self.provenance}:{self.samples}"
        if self.raw is not None:
            df["raw"] = self.raw
        return df

    def to_csv(self, path) -> None:
        self.to_frame()[["tau", "s", "provenance"]].to_csv(path, index=False)


def payment_masses(
    instance: AuctionInstance,
    budget: Optional[EnumerationBudget] = None,
    tie_break: TieBreak = "low",
) -> Tuple[Dict[float, float], float, float]:
    """
    Enumerates every value profile and returns the probability mass of each
    winner payment value (summed over bidders), the optimal revenue and the
    expected number of winners.
    """
    budget = budget or EnumerationBudget()
    budget.require_profiles(profile_count([len(d) for d in instance.bidders]))
    auction = optimal_auction(instance, tie_break)
    masses: Dict[float, float] = defaultdict(float)
    revenues, winners = [], []
    supports = [d.values for d in instance.bidders]
    probs = [d.pmf for d in instance.bidders]
    for values, weights in iter_profile_chunks(supports, probs):
        block = np.empty(len(weights))
        counts = np.empty(len(weights))
        for r, (row, weight) in enumerate(zip(values, weights)):
            outcome = auction(row.tolist())
            for i in outcome.winners:
                masses[outcome.payments[i]] += weight
            block[r] = outcome.revenue
            counts[r] = len(outcome.winners)
        revenues.append(block * weights)
        winners.append(counts * weights)
    opt = float(np.sum(np.concatenate(revenues)))
    expected_winners = float(np.sum(np.concatenate(winners)))
    return dict(masses), opt, expected_winners


def exact_s_curve(
    instance: AuctionInstance,
    grid: Optional[Sequence[float]] = None,
    budget: Optional[EnumerationBudget] = None,
    tie_break: TieBreak = "low",
) -> SCurve:
    """
    Exact s-curve by full profile enumeration.

    The default grid is every payment value that occurs plus 0, on which the
    step integral reproduces the optimal revenue exactly.
    """
    masses, opt, _ = payment_masses(instance, budget, tie_break)
    if grid is None:
        grid = sorted(set(masses) | {0.0})
    grid = np.asarray(sorted(grid), dtype=np.float64)
    payments = np.array(sorted(masses))
    mass = np.array([masses[p] for p in payments])
    tail = np.append(np.cumsum(mass[::-1])[::-1], 0.0)
    s = tail[np.searchsorted(payments, grid, side="left")]
    logger.info(f"exact s-curve on {len(grid)} grid points, Opt={opt:.6f}")
    return SCurve(grid=tuple(grid.tolist()), s=tuple(s.tolist()), provenance="exact", opt=opt)


def project_decreasing(grid: Sequence[float], values: Sequence[float]) -> np.ndarray:
    """Least-squares projection onto weakly decreasing sequences."""
    return IsotonicRegression(increasing=False).fit_transform(np.asarray(grid), np.asarray(values))


def default_grid(instance: AuctionInstance) -> np.ndarray:
    points = {0.0}
    for d in instance.bidders:
        points.update(d.support)
    return np.array(sorted(points))


def mc_s_curve(
    instance: AuctionInstance,
    grid: Optional[Sequence[float]],
    samples: int,
    rng: np.random.Generator,
    tie_break: TieBreak = "low",
) -> SCurve:
    """
    Monte-Carlo s-curve: the per-grid-point mean of ``sum_i 1{i wins and pays >= tau}``
    over ``samples`` profiles, projected onto decreasing sequences.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    grid = default_grid(instance) if grid is None else np.asarray(sorted(grid), dtype=np.float64)
    auction = optimal_auction(instance, tie_break)

    def chunk(size: int, stream: np.random.Generator) -> np.ndarray:
        draws = np.column_stack([sample(d, stream, size=size) for d in instance.bidders])
        counts = np.zeros(len(grid))
        for row in draws:
            outcome = auction(row.tolist())
            for i in outcome.winners:
                counts += grid <= outcome.payments[i]
        return counts

    raw = np.sum(run_chunked(chunk, samples, rng), axis=0) / samples
    regularized = project_decreasing(grid, raw)
    return SCurve(
        grid=tuple(grid.tolist()),
        s=tuple(regularized.tolist()),
        provenance="monte-carlo",
        samples=samples,
        raw=tuple(raw.tolist()),
    )
