import math
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

from scipy import integrate, optimize

from helpers import BoundError
from .kernels import baseline_multi, expected_truncated_poisson, poisson_mode_mass


logger = logging.getLogger(__name__)

QUAD_TOL = 1e-12
ROOT_TOL = 1e-12


@dataclass(frozen=True)
class ContinuousBound:
    """
    Solution of a continuous factor-revealing program.

    ``tau_star`` is the root found by bisection, ``tau_newton`` the same root
    found by Newton's method as a cross-check; ``factor = 1 / lp_value``.
    """
    H: int
    tau_star: float
    tau_newton: float
    lp_value: float
    factor: float


def _quad(fn: Callable[[float], float], a: float, b: float) -> float:
    value, _ = integrate.quad(fn, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    return value


def _bracket(g: Callable[[float], float], lo: float, step: float) -> Tuple[float, float]:
    # g(lo) < 0 and g grows without bound; widen until the sign changes.
    hi = lo + step
    while g(hi) <= 0:
        lo, hi = hi, hi + 2 * (hi - lo)
    return lo, hi


def _solve(H: int) -> ContinuousBound:
    def integrand(tau: float) -> float:
        return expected_truncated_poisson(H, 1.0 / tau)

    start = 1.0 / H
    target = poisson_mode_mass(H)

    def gap(tau: float) -> float:
        return _quad(integrand, start, tau) - target

    lo, hi = _bracket(gap, start, 0.5 / H)
    tau_star = optimize.bisect(gap, lo, hi, xtol=ROOT_TOL, maxiter=500)
    tau_newton = optimize.newton(gap, x0=lo, fprime=integrand, tol=ROOT_TOL, maxiter=100)
    if abs(tau_star - tau_newton) > 1e-9:
        raise BoundError(f"root finders disagree for H={H}: {tau_star} vs {tau_newton}")
    lp_value = 1.0 + math.log(H * tau_star)
    return ContinuousBound(H=H, tau_star=tau_star, tau_newton=tau_newton, lp_value=lp_value, factor=1.0 / lp_value)


def solve_lp_spm_continuous() -> ContinuousBound:
    """
    Single-unit continuous LP: the root ``tau* > 1`` of
    ``(1 - 1/e) + int_1^tau (1 - e^{-1/t}) dt = 1``, LP value ``1 + ln tau*``
    and factor ``1 / (1 + ln tau*)``.
    """
    return solve_lp_spm_H(1)


@lru_cache(maxsize=None)
def solve_lp_spm_H(H: int) -> ContinuousBound:
    """
    H-unit continuous LP.

    Finds ``tau* > 1/H`` with ``int_{1/H}^{tau*} E[min(Poisson(1/t), H)] dt = H^H / (H! e^H)``
    and returns LP value ``1 + ln(H tau*)``. The factor must beat the prior
    bound ``1 - H^H / (H! e^H)``.

    Parameters
    ----------
    H : int
        Number of units, at least 1.

    Returns
    -------
    ContinuousBound

    Raises
    ------
    BoundError
        If the factor does not exceed the prior bound or the two root finders disagree.
    """
    if H < 1:
        raise ValueError("H must be a positive integer")
    bound = _solve(H)
    if not bound.factor > baseline_multi(H):
        raise BoundError(f"H={H}: factor {bound.factor} does not exceed {baseline_multi(H)}")
    logger.info(f"H={H}: tau*={bound.tau_star:.6f} LP={bound.lp_value:.6f} factor={bound.factor:.6f}")
    return bound
