import math
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from dist_core import poisson_binomial_pmf
from .kernels import kernel_q_n, kernel_r_n


logger = logging.getLogger(__name__)

Kernel = Callable[[float, np.ndarray], np.ndarray]

S_TOTALS = (0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 4.5)


@dataclass
class CheckReport:
    name: str
    passed: bool
    checked: int
    witness: Optional[dict] = None
    details: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "witness": self.witness,
            "details": self.details,
        }


def spm_polynomial(points: np.ndarray, H: int) -> np.ndarray:
    """``sum_{i<H} (H - i) P[Y = i]`` for Y a sum of Bernoulli(s_j); one value per row of ``points``."""
    pmf = poisson_binomial_pmf(points)
    weights = np.zeros(pmf.shape[-1])
    top = min(H, pmf.shape[-1])
    weights[:top] = H - np.arange(top)
    return pmf @ weights


def esp_polynomial(points: np.ndarray) -> np.ndarray:
    """``2 P[Z = 0] + P[Z = 1]`` for Z a sum of Bernoulli(s_j)."""
    pmf = poisson_binomial_pmf(points)
    second = pmf[..., 1] if pmf.shape[-1] > 1 else 0.0
    return 2.0 * pmf[..., 0] + second


def simplex_points(n: int, s_total: float, trials: int, rng: np.random.Generator) -> np.ndarray:
    """
    Random points of ``{s in [0, 1]^n : sum s = s_total}``. Dirichlet draws
    are scaled to the total and any coordinate above 1 has its excess moved to
    coordinates with spare capacity.
    """
    if not 0 <= s_total <= n:
        raise ValueError(f"s_total must lie in [0, {n}]")
    points = rng.dirichlet(np.ones(n), size=trials) * s_total
    for _ in range(100):
        excess = np.clip(points - 1.0, 0.0, None)
        if not excess.any():
            break
        points = np.minimum(points, 1.0)
        spare = 1.0 - points
        room = spare.sum(axis=1, keepdims=True)
        share = np.divide(spare, room, out=np.zeros_like(spare), where=room > 0)
        points = points + share * excess.sum(axis=1, keepdims=True)
    return np.clip(points, 0.0, 1.0)


def polynomial_extremal_check(
    n: int,
    H: int,
    s_total: float,
    trials: int,
    rng: np.random.Generator,
    slack: float = 1e-12,
) -> CheckReport:
    """
    Checks that the SPM polynomial (for H units) and the ESP polynomial are
    maximized at the equal point ``s_j = s_total / n`` among ``trials`` random
    points with the same total, and that the ESP polynomial at the equal point
    equals ``r_n(s_total)``.
    """
    name = f"polynomial n={n} H={H} s={s_total:g}"
    points = simplex_points(n, s_total, trials, rng)
    equal = np.full((1, n), s_total / n)
    spm_equal = float(spm_polynomial(equal, H)[0])
    esp_equal = float(esp_polynomial(equal)[0])

    identity_gap = abs(esp_equal - kernel_r_n(n, s_total))
    if identity_gap > 1e-12:
        return CheckReport(name, False, 0, {"esp_equal": esp_equal, "r_n": kernel_r_n(n, s_total)},
                           [f"ESP polynomial at the equal point differs from r_n by {identity_gap:g}"])

    for label, values, best in (
        ("spm", spm_polynomial(points, H), spm_equal),
        ("esp", esp_polynomial(points), esp_equal),
    ):
        worst = int(np.argmax(values))
        if values[worst] > best + slack:
            witness = {"kind": label, "point": points[worst].tolist(), "value": float(values[worst]), "equal": best}
            logger.warning(f"{name}: {label} polynomial exceeds the equal point at {witness['point']}")
            return CheckReport(name, False, trials, witness)
    return CheckReport(name, True, trials)


def extremal_cells(n_max: int = 6, H_max: int = 3, s_totals: Sequence[float] = S_TOTALS) -> List[Tuple[int, int, float]]:
    """Every ``(n, H, s_total)`` the polynomial check covers, skipping totals above n."""
    return [(n, H, s) for n in range(1, n_max + 1) for H in range(1, H_max + 1) for s in s_totals if s <= n]


def flipped_r_kernel(n: float, y: np.ndarray) -> np.ndarray:
    """``4 - r_n``: turns ``(2 - r_n(y)) / y`` into its negation."""
    return 4.0 - kernel_r_n(n, y)


def monotone_kernel_check(
    n_max: int = 50,
    xs: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
    points: int = 1000,
    q_kernel: Kernel = kernel_q_n,
    r_kernel: Kernel = kernel_r_n,
    slack: float = 1e-12,
) -> CheckReport:
    """
    Grid check that ``y -> (x + 1 - q_n(y)) / y`` and ``y -> (2 - r_n(y)) / y``
    decrease on (0, 1] for every n up to ``n_max`` and in the n -> infinity
    limit. Kernels are injectable so a broken one can be shown to fail.
    """
    y = np.arange(1, points + 1) / points
    checked = 0
    for n in list(range(1, n_max + 1)) + [math.inf]:
        curves = [(f"q x={x:g}", (x + 1.0 - q_kernel(n, y)) / y) for x in xs]
        curves.append(("r", (2.0 - r_kernel(n, y)) / y))
        for label, values in curves:
            checked += 1
            rises = np.flatnonzero(np.diff(values) > slack * np.maximum(1.0, np.abs(values[:-1])))
            if len(rises):
                at = int(rises[0])
                witness = {"n": n if math.isfinite(n) else "inf", "curve": label,
                           "y": [float(y[at]), float(y[at + 1])],
                           "values": [float(values[at]), float(values[at + 1])]}
                logger.warning(f"kernel {label} increases for n={n} near y={y[at]:.4f}")
                return CheckReport("monotone kernels", False, checked, witness)
    return CheckReport("monotone kernels", True, checked)
