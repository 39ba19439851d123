import math

import numpy as np

from .kernels import kernel_q_n, kernel_r_n
from .simplex import LpInstance


def _grid(k: int) -> np.ndarray:
    if k < 2:
        raise ValueError("discretization needs k >= 2")
    return np.arange(1, k + 1) / k


def build_lp_spm_n(n: float, k: int) -> LpInstance:
    """
    LP-SPM-n on the grid ``s_i = i/k``: maximize ``sum_i w_i`` subject to the
    uniform-price rows ``sum_{i>j} w_i s_j / s_i <= 1`` for j < k and the
    Myersonian row ``sum_i w_i (1 - q_n(s_i)) / s_i <= 1``.
    """
    s = _grid(k)
    j = np.arange(1, k)[:, None]
    i = np.arange(1, k + 1)[None, :]
    uniform_rows = np.where(i > j, j / i, 0.0)
    myersonian_row = (1.0 - kernel_q_n(n, s)) / s
    A = np.vstack([uniform_rows, myersonian_row[None, :]])
    return LpInstance(c=np.ones(k), A=A, b=np.ones(k), name=f"lp-spm-n(n={n}, k={k})")


def _esp_rows(k: int, own: np.ndarray, cross_q: np.ndarray, myersonian: np.ndarray, name: str) -> LpInstance:
    s = _grid(k)
    j = np.arange(1, k + 1)[:, None]
    i = np.arange(1, k + 1)[None, :]
    mixed = np.where(i <= j, own[None, :], (s[:, None] + 1.0 - cross_q[None, :]) / s[None, :])
    A = np.vstack([mixed, myersonian[None, :]])
    b = np.append(np.full(k, 2.0), 1.0)
    return LpInstance(c=np.ones(k), A=A, b=b, name=name)


def build_lp_esp_n(n: float, k: int) -> LpInstance:
    """
    LP-ESP-n: rows ``sum_{i<=j} w_i (2 - r_n(s_i)) / s_i + sum_{i>j} w_i (s_j + 1 - q_n(s_i)) / s_i <= 2``
    for every j, plus ``sum_i w_i (1 - q_n(s_i)) / s_i <= 1``.
    """
    s = _grid(k)
    q = kernel_q_n(n, s)
    own = (2.0 - kernel_r_n(n, s)) / s
    return _esp_rows(k, own, q, (1.0 - q) / s, name=f"lp-esp-n(n={n}, k={k})")


def build_lp_esp(k: int) -> LpInstance:
    """LP-ESP: the n -> infinity form of LP-ESP-n with e^{-s} kernels."""
    lp = build_lp_esp_n(math.inf, k)
    return LpInstance(c=lp.c, A=lp.A, b=lp.b, name=f"lp-esp(k={k})")
