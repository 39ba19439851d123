import math
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

import factor_lp
import settings
from dist_core import DiscreteDistribution, sample
from helpers import (
    BudgetExceededError,
    EnumerationBudget,
    FeasibilityError,
    PriceVector,
    RevenueEstimate,
    iter_profile_chunks,
    profile_count,
    run_chunked,
)
from myerson import AuctionInstance, FeasibilityConstraint, KUnit, exact_s_curve, optimal_auction
from myerson.optimal import TieBreak
from mechanisms import (
    EagerSecondPrice,
    SequentialPostedPrice,
    expected_esp_revenue,
    expected_spm_revenue,
    myersonian_esp_revenue,
    myersonian_spm_revenue,
    uniform_esp_search,
    uniform_price_search,
)


logger = logging.getLogger(__name__)

MECHANISM_TAGS = ("opt", "mp", "up", "me", "ue")
CERTIFY_KS = (200, 400)
FINITE_N_MAX = 10


class ExactOpt(NamedTuple):
    revenue: float
    trace: Optional[pd.DataFrame] = None


@dataclass(frozen=True)
class ThresholdMarginal:
    """
    Exact distribution of one bidder's threshold against independent opponents.
    ``values`` may end with +inf (the bidder cannot win).
    """
    values: Tuple[float, ...]
    probs: Tuple[float, ...]

    @property
    def losing_mass(self) -> float:
        return sum(p for v, p in zip(self.values, self.probs) if math.isinf(v))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"threshold": self.values, "prob": self.probs})


def _profile_space(instance: AuctionInstance, budget: EnumerationBudget):
    budget.require_profiles(profile_count([len(d) for d in instance.bidders]))
    return [d.values for d in instance.bidders], [d.pmf for d in instance.bidders]


def _opt_block(auction, values: np.ndarray, weights: np.ndarray, trace: bool):
    revenues = np.empty(len(weights))
    rows = []
    for r, row in enumerate(values):
        outcome = auction(row.tolist())
        revenues[r] = outcome.revenue
        if trace:
            record = {f"v{i}": v for i, v in enumerate(row)}
            record.update({f"pay{i}": p for i, p in enumerate(outcome.payments)})
            record.update(prob=weights[r], winners=",".join(map(str, outcome.winners)), revenue=outcome.revenue)
            rows.append(record)
    return revenues * weights, rows


def exact_opt(
    instance: AuctionInstance,
    budget: Optional[EnumerationBudget] = None,
    trace: bool = False,
    tie_break: TieBreak = "low",
) -> ExactOpt:
    """
    Expected revenue of the optimal auction by enumerating every value profile.

    Parameters
    ----------
    instance : AuctionInstance
    budget : EnumerationBudget, optional
        Raises BudgetExceededError when the profile count exceeds it.
    trace : bool
        Also return a per-profile DataFrame (values, probability, winners,
        payments, revenue).
    tie_break : {"low", "high"}

    Returns
    -------
    ExactOpt
    """
    budget = budget or EnumerationBudget()
    supports, probs = _profile_space(instance, budget)
    auction = optimal_auction(instance, tie_break)
    blocks = Parallel(n_jobs=settings.JOBS, prefer="threads")(
        delayed(_opt_block)(auction, values, weights, trace)
        for values, weights in iter_profile_chunks(supports, probs)
    )
    revenue = float(np.sum(np.concatenate([b[0] for b in blocks])))
    frame = pd.DataFrame([row for b in blocks for row in b[1]]) if trace else None
    logger.debug(f"exact Opt {revenue:.10f} over {profile_count([len(s) for s in supports])} profiles")
    return ExactOpt(revenue, frame)


def threshold_marginals(
    instance: AuctionInstance,
    budget: Optional[EnumerationBudget] = None,
    tie_break: TieBreak = "low",
) -> List[ThresholdMarginal]:
    """
    Exact marginal of ``t_i(v_{-i})`` for every bidder, from one pass over that
    bidder's opponent-profile space. The re-sampled ``t'_i`` has the same law.
    """
    budget = budget or EnumerationBudget()
    auction = optimal_auction(instance, tie_break)
    marginals = []
    for i in range(instance.n):
        others = [d for j, d in enumerate(instance.bidders) if j != i]
        budget.require_profiles(profile_count([len(d) for d in others]))
        masses: Dict[float, float] = defaultdict(float)
        for opponents, weights in iter_profile_chunks([d.values for d in others], [d.pmf for d in others]):
            thresholds = auction.thresholds_batch(i, opponents)
            for t, w in zip(thresholds, weights):
                masses[float(t)] += w
        values = sorted(t for t, w in masses.items() if w > 0)
        marginals.append(ThresholdMarginal(tuple(values), tuple(masses[t] for t in values)))
    return marginals


def _threshold_profiles(instance: AuctionInstance, budget: EnumerationBudget, tie_break: TieBreak, per_profile: int = 1):
    marginals = threshold_marginals(instance, budget, tie_break)
    budget.require_thresholds(profile_count([len(m.values) for m in marginals]) * per_profile)
    supports = [np.asarray(m.values) for m in marginals]
    probs = [np.asarray(m.probs) for m in marginals]
    for thresholds, weights in iter_profile_chunks(supports, probs):
        for row, weight in zip(thresholds, weights):
            yield PriceVector.from_thresholds(row, instance.tops), float(weight)


def exact_myersonian_value(
    instance: AuctionInstance,
    mechanism: str,
    budget: Optional[EnumerationBudget] = None,
    tie_break: TieBreak = "low",
) -> float:
    """
    Exact MP (``mechanism="mp"``) or ME (``"me"``): the expectation over the
    product of independent threshold marginals of the fixed-price revenue.
    """
    budget = budget or EnumerationBudget()
    if mechanism == "mp":
        return float(sum(w * expected_spm_revenue(instance, prices)
                         for prices, w in _threshold_profiles(instance, budget, tie_break)))
    values = profile_count([len(d) for d in instance.bidders])
    return float(sum(w * expected_esp_revenue(instance, prices, budget)
                     for prices, w in _threshold_profiles(instance, budget, tie_break, per_profile=values)))


def exact_mechanism_value(
    instance: AuctionInstance,
    mechanism: str,
    budget: Optional[EnumerationBudget] = None,
    tie_break: TieBreak = "low",
) -> float:
    """
    Exact expected revenue of ``opt``, ``mp`` (Myersonian SPM), ``up`` (best
    uniform SPM), ``me`` (Myersonian ESP) or ``ue`` (best uniform ESP).
    """
    if mechanism not in MECHANISM_TAGS:
        raise ValueError(f"unknown mechanism {mechanism!r}; choose from {MECHANISM_TAGS}")
    if mechanism == "opt":
        return exact_opt(instance, budget, tie_break=tie_break).revenue
    if mechanism == "up":
        return uniform_price_search(instance).revenue
    if mechanism == "ue":
        return uniform_esp_search(instance).revenue
    return exact_myersonian_value(instance, mechanism, budget, tie_break)


@dataclass
class DominanceReport:
    checked: int = 0
    violations: List[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def per_profile_dominance(
    instance: AuctionInstance,
    budget: Optional[EnumerationBudget] = None,
    tie_break: TieBreak = "low",
    slack: float = 1e-12,
) -> DominanceReport:
    """
    Runs the SPM and the ESP with the same price vector on every value profile
    and every positive-mass threshold profile of a single-unit instance and
    records each profile where the ESP earns less.
    """
    if not instance.is_single_unit:
        raise FeasibilityError("per-profile dominance is checked on single-unit instances")
    budget = budget or EnumerationBudget()
    supports, probs = _profile_space(instance, budget)
    per_profile = profile_count([len(s) for s in supports])
    report = DominanceReport()
    for prices, _ in _threshold_profiles(instance, budget, tie_break, per_profile=per_profile):
        spm = SequentialPostedPrice(instance, prices)
        esp = EagerSecondPrice(instance, prices)
        for values, _ in iter_profile_chunks(supports, probs):
            for row in values.tolist():
                report.checked += 1
                a, b = spm(row).revenue, esp(row).revenue
                if b < a - slack:
                    report.violations.append({"prices": list(prices.prices), "values": row, "spm": a, "esp": b})
    logger.info(f"dominance: {report.checked} profiles, {len(report.violations)} violations")
    return report


def random_instance(
    seed: int,
    n: int,
    support_size: int,
    feasibility: Optional[FeasibilityConstraint] = None,
    grid: int = 10,
) -> AuctionInstance:
    """
    Reproducible random instance: each bidder's support is ``support_size``
    distinct integers from 1..grid with Dirichlet(1, ..., 1) probabilities.
    """
    if support_size > grid:
        raise ValueError(f"support_size must be at most {grid}")
    rng = np.random.default_rng(seed)
    bidders = []
    for _ in range(n):
        support = np.sort(rng.choice(np.arange(1, grid + 1), size=support_size, replace=False)).astype(float)
        probs = rng.dirichlet(np.ones(support_size))
        bidders.append(DiscreteDistribution(tuple(support.tolist()), tuple(probs.tolist())))
    return AuctionInstance(tuple(bidders), feasibility or KUnit(1))


@dataclass
class Certificate:
    """
    Exact revenues of one instance and the verdicts of every inequality
    checked on it. ``margin`` is ``max(MP, UP) - factor * Opt``.
    """
    opt: float
    mp: float
    up: float
    factor: float
    me: Optional[float] = None
    ue: Optional[float] = None
    esp_factor: Optional[float] = None
    failures: List[str] = field(default_factory=list)

    @property
    def spm(self) -> float:
        return max(self.mp, self.up)

    @property
    def esp(self) -> Optional[float]:
        return None if self.me is None else max(self.me, self.ue)

    @property
    def margin(self) -> float:
        return self.spm - self.factor * self.opt

    @property
    def ratio(self) -> float:
        return self.spm / self.opt if self.opt > 0 else 1.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "opt": self.opt, "mp": self.mp, "up": self.up, "me": self.me, "ue": self.ue,
            "factor": self.factor, "esp_factor": self.esp_factor, "ratio": self.ratio,
            "margin": self.margin, "passed": self.passed, "failures": self.failures,
        }


@lru_cache(maxsize=None)
def finite_spm_factor(n: int, ks: Tuple[int, ...] = CERTIFY_KS) -> float:
    """``max_k 1 / LP-SPM(n, k)`` over ``ks``; 0 when no program solves."""
    best = 0.0
    for k in ks:
        solution = factor_lp.solve_lp(factor_lp.build_lp_spm_n(n, k))
        if solution.status == factor_lp.OPTIMAL:
            best = max(best, solution.reciprocal)
        else:
            logger.warning(f"LP-SPM(n={n}, k={k}) finished with status {solution.status}")
    return min(best, 1.0)


def spm_factor(instance: AuctionInstance) -> float:
    """
    Posted-price factor certified on a k-unit instance. Single-unit instances
    with at most ``FINITE_N_MAX`` bidders use their own bidder count's finite
    LP; everything else uses the H-unit continuous bound.
    """
    if not isinstance(instance.feasibility, KUnit):
        raise FeasibilityError("posted-price factors are defined for k-unit instances")
    H = instance.feasibility.H
    continuous = factor_lp.solve_lp_spm_H(H).factor
    if H == 1 and instance.n <= FINITE_N_MAX:
        return max(finite_spm_factor(instance.n), continuous)
    return continuous


def certify_instance(
    instance: AuctionInstance,
    factor: Optional[float] = None,
    esp_factor: Optional[float] = None,
    budget: Optional[EnumerationBudget] = None,
    tie_break: TieBreak = "low",
    slack: float = 1e-9,
) -> Certificate:
    """
    Exact certification of a k-unit instance.

    Checks ``max(MP, UP) >= factor * Opt`` (factor defaults to
    ``spm_factor(instance)``), ``MP >= (1 - 1/e) Opt``, ``tau s(tau) <= UP``
    at every payment level, and that the s-curve integrates to Opt.
    Single-unit instances also check ``ME >= MP`` and
    ``max(ME, UE) >= esp_factor * Opt``.
    """
    if not isinstance(instance.feasibility, KUnit):
        raise FeasibilityError("exact certification supports k-unit instances")
    budget = budget or EnumerationBudget()
    factor = spm_factor(instance) if factor is None else factor

    curve = exact_s_curve(instance, budget=budget, tie_break=tie_break)
    opt = curve.opt
    cert = Certificate(
        opt=opt,
        mp=exact_mechanism_value(instance, "mp", budget, tie_break),
        up=uniform_price_search(instance).revenue,
        factor=factor,
    )
    scale = max(1.0, opt)
    if cert.spm < factor * opt - slack * scale:
        cert.failures.append(f"max(MP, UP) = {cert.spm:.10f} below {factor:.4f} x Opt = {factor * opt:.10f}")
    if cert.mp < (1 - 1 / math.e) * opt - slack * scale:
        cert.failures.append(f"MP = {cert.mp:.10f} below (1 - 1/e) Opt")
    if abs(curve.step_integral() - opt) > slack * scale:
        cert.failures.append(f"s-curve integral {curve.step_integral():.12f} differs from Opt {opt:.12f}")
    for tau, s in zip(curve.grid, curve.s):
        if tau * s > cert.up + slack * scale:
            cert.failures.append(f"tau s(tau) = {tau * s:.10f} exceeds UP = {cert.up:.10f} at tau = {tau:g}")
            break

    if instance.is_single_unit:
        cert.esp_factor = factor_lp.esp_headline_factor() if esp_factor is None else esp_factor
        cert.me = exact_mechanism_value(instance, "me", budget, tie_break)
        cert.ue = uniform_esp_search(instance).revenue
        if cert.me < cert.mp - slack * scale:
            cert.failures.append(f"ME = {cert.me:.10f} below MP = {cert.mp:.10f}")
        if cert.esp < cert.esp_factor * opt - slack * scale:
            cert.failures.append(f"max(ME, UE) = {cert.esp:.10f} below {cert.esp_factor:.4f} x Opt")

    level = logging.INFO if cert.passed else logging.WARNING
    logger.log(level, f"certificate: Opt={opt:.6f} SPM={cert.spm:.6f} ratio={cert.ratio:.4f} failures={len(cert.failures)}")
    return cert


def _mc_opt(instance: AuctionInstance, trials: int, rng: np.random.Generator, tie_break: TieBreak) -> RevenueEstimate:
    auction = optimal_auction(instance, tie_break)

    def chunk(size: int, stream: np.random.Generator):
        values = np.column_stack([sample(d, stream, size=size) for d in instance.bidders])
        revenues = np.array([auction(row.tolist()).revenue for row in values])
        return float(revenues.sum()), float(revenues @ revenues), size

    return RevenueEstimate.from_moments(run_chunked(chunk, trials, rng))


def evaluate(
    instance: AuctionInstance,
    mechanism: str,
    trials: int,
    rng: np.random.Generator,
    budget: Optional[EnumerationBudget] = None,
    tie_break: TieBreak = "low",
) -> RevenueEstimate:
    """
    Exact revenue when enumeration fits the budget, otherwise a Monte-Carlo
    estimate over ``trials`` draws. Uniform arms are always exact.
    """
    try:
        return RevenueEstimate.exact_value(exact_mechanism_value(instance, mechanism, budget, tie_break))
    except BudgetExceededError as e:
        logger.info(f"{mechanism}: {e}; falling back to {trials} Monte-Carlo trials")
    if mechanism == "opt":
        return _mc_opt(instance, trials, rng, tie_break)
    if mechanism == "mp":
        return myersonian_spm_revenue(instance, trials, rng, tie_break)
    return myersonian_esp_revenue(instance, trials, rng, tie_break)
