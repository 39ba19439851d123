import math
from typing import Union

import numpy as np
from scipy.special import gammainc, gammaln

ArrayLike = Union[float, np.ndarray]

SERIES_CUTOFF = 1e-6


def kernel_f(x: ArrayLike) -> ArrayLike:
    """f(x) = (1 - e^{-x}) / x with f(0) = 1."""
    x = np.asarray(x, dtype=np.float64)
    small = x < SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    value = np.where(small, 1.0 - x / 2.0 + x * x / 6.0, -np.expm1(-safe) / safe)
    return float(value) if value.ndim == 0 else value


def kernel_f_H(H: int, x: ArrayLike) -> ArrayLike:
    """
    f_H(x) = (H - e^{-x} sum_{i<H} (H - i) x^i / i!) / x, i.e. E[min(Poisson(x), H)] / x.

    Written as ``sum_{k=1..H} P[Poisson(x) >= k] / x``; the k = 1 term is
    ``kernel_f`` and the regularized incomplete gamma gives the rest.
    """
    if H < 1:
        raise ValueError("H must be a positive integer")
    x = np.asarray(x, dtype=np.float64)
    total = np.asarray(kernel_f(x), dtype=np.float64)
    if H > 1:
        safe = np.where(x > 0, x, 1.0)
        tails = sum(gammainc(k, safe) for k in range(2, H + 1))
        total = total + np.where(x > 0, tails / safe, 0.0)
    return float(total) if total.ndim == 0 else total


def expected_truncated_poisson(H: int, x: ArrayLike) -> ArrayLike:
    """E[min(Poisson(x), H)]."""
    x = np.asarray(x, dtype=np.float64)
    safe = np.where(x > 0, x, 1.0)
    value = np.where(x > 0, sum(gammainc(k, safe) for k in range(1, H + 1)), 0.0)
    return float(value) if value.ndim == 0 else value


def kernel_q_n(n: float, y: ArrayLike) -> ArrayLike:
    """q_n(y) = (1 - y/n)^n; ``n = math.inf`` gives e^{-y}."""
    y = np.asarray(y, dtype=np.float64)
    value = np.exp(-y) if math.isinf(n) else (1.0 - y / n) ** n
    return float(value) if np.ndim(value) == 0 else value


def kernel_r_n(n: float, y: ArrayLike) -> ArrayLike:
    """r_n(y) = 2 (1 - y/n)^n + y (1 - y/n)^{n-1}; ``n = math.inf`` gives (2 + y) e^{-y}."""
    y = np.asarray(y, dtype=np.float64)
    if math.isinf(n):
        value = (2.0 + y) * np.exp(-y)
    else:
        base = 1.0 - y / n
        value = 2.0 * base ** n + y * base ** (n - 1)
    return float(value) if np.ndim(value) == 0 else value


def baseline_spm(n: int) -> float:
    """Correlation-gap factor 1 - (1 - 1/n)^n of the posted-price baseline."""
    return 1.0 - (1.0 - 1.0 / n) ** n


def poisson_mode_mass(H: int) -> float:
    """H^H / (H! e^H) in log-domain, safe up to H = 170 and beyond."""
    return math.exp(H * math.log(H) - gammaln(H + 1) - H)


def baseline_multi(H: int) -> float:
    """Prior H-unit factor 1 - H^H / (H! e^H)."""
    return 1.0 - poisson_mode_mass(H)
