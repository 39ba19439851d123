import logging
import concurrent.futures as cf
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

import factor_lp
import settings
from dist_core import sample
from exact_eval import exact_mechanism_value, exact_opt
from helpers import (
    BoundError,
    BudgetExceededError,
    EnumerationBudget,
    FeasibilityError,
    InvariantError,
    PriceVector,
    RevenueEstimate,
    iter_profile_chunks,
    profile_count,
)
from mechanisms import SequentialPostedPrice, best_spm_revenue, uniform_price_search
from myerson import AuctionInstance, KUnit, PositionAuction, myerson_allocate, powerset
from myerson.optimal import TieBreak, optimal_auction


logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9


#---------------FEASIBILITY------------------------#

class PaFeasibility(NamedTuple):
    feasible: bool
    size: Optional[int] = None
    subset: Tuple[int, ...] = ()


def _alphas(instance: AuctionInstance) -> Tuple[float, ...]:
    if not isinstance(instance.feasibility, PositionAuction):
        raise FeasibilityError("position-auction operations need PositionAuction feasibility")
    return instance.feasibility.alphas


def pa_feasible(x: Sequence[float], alphas: Sequence[float]) -> PaFeasibility:
    """
    Whether expected clicks ``x`` can be realized by assigning bidders to slots
    with click-through-rates ``alphas``: every set S must satisfy
    ``sum_{i in S} x_i <= alpha_1 + ... + alpha_|S|``. Only the top-|S| set of
    each size can bind, so the check runs on prefix sums of x sorted in
    decreasing order and reports the smallest violated size with its set.
    """
    x = np.asarray(x, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    order = np.argsort(-x, kind="stable")
    prefix = np.cumsum(x[order])
    capacity = np.cumsum(alphas)[: len(x)]
    violated = np.flatnonzero(prefix > capacity + FEASIBILITY_TOL)
    if len(violated) == 0:
        return PaFeasibility(True)
    size = int(violated[0]) + 1
    return PaFeasibility(False, size, tuple(sorted(int(i) for i in order[:size])))


def pa_feasible_subsets(x: Sequence[float], alphas: Sequence[float]) -> PaFeasibility:
    """Same check over every subset explicitly; exponential in n."""
    capacity = np.cumsum(alphas)
    for subset in powerset(range(len(x))):
        if subset and sum(x[i] for i in subset) > capacity[len(subset) - 1] + FEASIBILITY_TOL:
            return PaFeasibility(False, len(subset), tuple(subset))
    return PaFeasibility(True)


#---------------OUTCOMES------------------------#

@dataclass(frozen=True)
class PaOutcome:
    """
    Position-auction outcome in expected-click space.

    Attributes
    ----------
    clicks, payments : Tuple[float, ...]
        Per-bidder ``x_i`` and ``pi_i``.
    layer_clicks, layer_payments : Tuple[Tuple[float, ...], ...]
        Row j-1 holds ``x_i^j`` and ``pi_i^j`` of the j-unit layer.
    weights : Tuple[float, ...]
        ``alpha_j - alpha_{j+1}``.
    """
    clicks: Tuple[float, ...]
    payments: Tuple[float, ...]
    layer_clicks: Tuple[Tuple[float, ...], ...]
    layer_payments: Tuple[Tuple[float, ...], ...]
    weights: Tuple[float, ...]

    @property
    def revenue(self) -> float:
        return float(sum(self.payments))

    @property
    def layer_revenues(self) -> Tuple[float, ...]:
        return tuple(float(sum(row)) for row in self.layer_payments)

    def to_dict(self) -> dict:
        return {
            "clicks": list(self.clicks),
            "payments": list(self.payments),
            "revenue": self.revenue,
            "layer_revenues": list(self.layer_revenues),
            "weights": list(self.weights),
        }


def _compose(layer_clicks: np.ndarray, layer_payments: np.ndarray, weights: Sequence[float]) -> PaOutcome:
    w = np.asarray(weights)
    return PaOutcome(
        clicks=tuple((w @ layer_clicks).tolist()),
        payments=tuple((w @ layer_payments).tolist()),
        layer_clicks=tuple(tuple(row) for row in layer_clicks.tolist()),
        layer_payments=tuple(tuple(row) for row in layer_payments.tolist()),
        weights=tuple(weights),
    )


def _layer(instance: AuctionInstance, j: int) -> AuctionInstance:
    return instance.with_feasibility(KUnit(j))


def pa_optimal(instance: AuctionInstance, values: Sequence[float], tie_break: TieBreak = "low") -> PaOutcome:
    """
    Optimal position auction on one value profile: the j-unit optimal auction
    for every layer j, composed with weights ``alpha_j - alpha_{j+1}``.

    Raises
    ------
    InvariantError
        If a bidder allocated in layer j is not allocated in layer j + 1, or the
        composed clicks are not feasible.
    """
    alphas = _alphas(instance)
    n = instance.n
    clicks = np.zeros((n, n))
    payments = np.zeros((n, n))
    for j in range(1, n + 1):
        outcome = myerson_allocate(_layer(instance, j), values, tie_break)
        clicks[j - 1, list(outcome.winners)] = 1.0
        payments[j - 1] = outcome.payments
    drops = np.argwhere(np.diff(clicks, axis=0) < 0)
    if len(drops):
        j, i = drops[0]
        raise InvariantError(f"bidder {i} wins the {j + 1}-unit layer but not the {j + 2}-unit layer at {list(values)}")
    outcome = _compose(clicks, payments, instance.feasibility.layer_weights)
    check = pa_feasible(outcome.clicks, alphas)
    if not check.feasible:
        raise InvariantError(f"optimal clicks {outcome.clicks} violate slot capacity at size {check.size}")
    return outcome


#---------------SPM------------------------#

class LayerPolicy(NamedTuple):
    j: int
    label: str
    price: float
    expected: float


@dataclass(frozen=True)
class PaSpmResult:
    """Mean outcome of the per-layer SPM over ``revenue.trials`` draws."""
    outcome: PaOutcome
    revenue: RevenueEstimate
    policies: Tuple[LayerPolicy, ...]
    checked: int

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.to_dict(),
            "revenue": self.revenue.to_dict(),
            "layers": [p._asdict() for p in self.policies],
            "feasibility_checked": self.checked,
        }


def _choose_policy(layer: AuctionInstance, j: int, trials: int, rng: np.random.Generator,
                   budget: EnumerationBudget) -> LayerPolicy:
    try:
        mp = RevenueEstimate.exact_value(exact_mechanism_value(layer, "mp", budget))
    except BudgetExceededError:
        mp = None
    best = best_spm_revenue(layer, trials, rng, myersonian=mp)
    return LayerPolicy(j, best.label, best.uniform.price, best.revenue)


def _run_layer(layer: AuctionInstance, policy: LayerPolicy, values: np.ndarray, stream: np.random.Generator):
    rows, n = values.shape
    clicks = np.zeros((rows, n))
    payments = np.zeros((rows, n))
    if policy.label == "myersonian":
        thresholds = optimal_auction(layer).resample_matrix(stream, rows)
        price_rows = [PriceVector.from_thresholds(t, layer.tops) for t in thresholds]
    else:
        price_rows = [PriceVector.uniform(policy.price, n)] * rows
    for r, prices in enumerate(price_rows):
        outcome = SequentialPostedPrice(layer, prices)(values[r])
        clicks[r, list(outcome.winners)] = 1.0
        payments[r] = outcome.payments
    return clicks, payments


def pa_spm(
    instance: AuctionInstance,
    trials: int,
    rng: np.random.Generator,
    budget: Optional[EnumerationBudget] = None,
    jobs: Optional[int] = None,
) -> PaSpmResult:
    """
    Position-auction SPM with one price per bidder and layer.

    Each layer j with positive weight runs the better of the Myersonian and
    uniform j-unit SPM (arm chosen exactly when the layer fits the budget),
    with fresh prices drawn independently per layer and trial. Every trial's
    composed click vector is checked against the slot capacities.
    """
    alphas = _alphas(instance)
    budget = budget or EnumerationBudget()
    n = instance.n
    weights = instance.feasibility.layer_weights
    value_stream, *streams = rng.spawn(n + 1)
    values = np.column_stack([sample(d, value_stream, size=trials) for d in instance.bidders])

    def work(j: int):
        if weights[j - 1] == 0:
            return None, np.zeros((trials, n)), np.zeros((trials, n))
        layer = _layer(instance, j)
        choose, run = streams[j - 1].spawn(2)
        policy = _choose_policy(layer, j, trials, choose, budget)
        return (policy, *_run_layer(layer, policy, values, run))

    with cf.ThreadPoolExecutor(max_workers=jobs or settings.JOBS) as executor:
        layers = list(executor.map(work, range(1, n + 1)))

    clicks = np.stack([c for _, c, _ in layers], axis=1)  # trials x layers x bidders
    payments = np.stack([p for _, _, p in layers], axis=1)
    w = np.asarray(weights)
    composed = np.einsum("j,tji->ti", w, clicks)
    for t, x in enumerate(composed):
        check = pa_feasible(x, alphas)
        if not check.feasible:
            raise InvariantError(f"trial {t}: clicks {x.tolist()} violate slot capacity at size {check.size}")
    revenues = np.einsum("j,tji->t", w, payments)
    revenue = RevenueEstimate.from_moments([(float(revenues.sum()), float(revenues @ revenues), trials)])
    outcome = _compose(clicks.mean(axis=0), payments.mean(axis=0), weights)
    policies = tuple(p for p, _, _ in layers if p is not None)
    logger.info(f"PA-SPM revenue {revenue.mean:.6f} +- {revenue.stderr:.6f} over {trials} trials")
    return PaSpmResult(outcome, revenue, policies, trials)


#---------------BOUND------------------------#

def pa_bound(f: Sequence[float], lp_values: Optional[Sequence[float]] = None) -> float:
    """
    Approximation factor ``sum_j f_j / LP-SPM(j)`` for revenue fractions ``f``.
    ``lp_values`` defaults to the continuous j-unit LP values.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1 or len(f) == 0 or np.any(f < 0) or abs(f.sum() - 1.0) > 1e-9:
        raise BoundError(f"layer fractions must be a probability vector, got {f.tolist()}")
    if lp_values is None:
        lp_values = [factor_lp.solve_lp_spm_H(j).lp_value for j in range(1, len(f) + 1)]
    lp_values = np.asarray(lp_values, dtype=np.float64)
    if lp_values.shape != f.shape or np.any(lp_values < 1):
        raise BoundError("need one LP value of at least 1 per layer")
    return float(np.sum(f / lp_values))


def _layer_values(instance: AuctionInstance, budget: EnumerationBudget, tie_break: TieBreak):
    weights = instance.feasibility.layer_weights
    opt, spm = np.zeros(instance.n), np.zeros(instance.n)
    for j in range(1, instance.n + 1):
        if weights[j - 1] == 0:
            continue
        layer = _layer(instance, j)
        opt[j - 1] = exact_opt(layer, budget, tie_break=tie_break).revenue
        mp = exact_mechanism_value(layer, "mp", budget, tie_break)
        spm[j - 1] = max(mp, uniform_price_search(layer).revenue)
    return np.asarray(weights), opt, spm


def pa_revenue_fractions(
    instance: AuctionInstance, budget: Optional[EnumerationBudget] = None, tie_break: TieBreak = "low"
) -> np.ndarray:
    """Exact share ``f_j`` of the optimal position-auction revenue earned by layer j."""
    _alphas(instance)
    weights, opt, _ = _layer_values(instance, budget or EnumerationBudget(), tie_break)
    shares = weights * opt
    if shares.sum() <= 0:
        raise BoundError("optimal position-auction revenue is zero")
    return shares / shares.sum()


@dataclass(frozen=True)
class PaExact:
    opt: float
    spm: float
    layer_opt: Tuple[float, ...]
    layer_spm: Tuple[float, ...]
    fractions: Tuple[float, ...]
    bound: float

    @property
    def ratio(self) -> float:
        return self.spm / self.opt

    def to_dict(self) -> dict:
        return {
            "opt": self.opt, "spm": self.spm, "ratio": self.ratio, "bound": self.bound,
            "layer_opt": list(self.layer_opt), "layer_spm": list(self.layer_spm),
            "fractions": list(self.fractions),
        }


def exact_pa_values(
    instance: AuctionInstance, budget: Optional[EnumerationBudget] = None, tie_break: TieBreak = "low"
) -> PaExact:
    """
    Exact PA-Opt (enumerating pa_optimal on every profile), exact PA-SPM
    (layer-wise ``max(MP, UP)``), the revenue fractions and their factor.
    """
    alphas = _alphas(instance)
    budget = budget or EnumerationBudget()
    supports = [d.values for d in instance.bidders]
    budget.require_profiles(profile_count([len(s) for s in supports]))
    opt = 0.0
    for values, weights in iter_profile_chunks(supports, [d.pmf for d in instance.bidders]):
        opt += float(sum(w * pa_optimal(instance, row.tolist(), tie_break).revenue for row, w in zip(values, weights)))
    weights, layer_opt, layer_spm = _layer_values(instance, budget, tie_break)
    shares = weights * layer_opt
    if shares.sum() <= 0:
        raise BoundError("optimal position-auction revenue is zero")
    fractions = shares / shares.sum()
    result = PaExact(
        opt=opt,
        spm=float(weights @ layer_spm),
        layer_opt=tuple(layer_opt.tolist()),
        layer_spm=tuple(layer_spm.tolist()),
        fractions=tuple(fractions.tolist()),
        bound=pa_bound(fractions),
    )
    logger.info(f"PA exact: Opt={result.opt:.6f} SPM={result.spm:.6f} bound={result.bound:.4f} alphas={list(alphas)}")
    return result
