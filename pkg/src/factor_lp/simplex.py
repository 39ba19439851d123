import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from helpers import InstanceError


logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


@dataclass
class LpInstance:
    """
    Dense LP ``max c^T w  s.t.  A w <= b,  w >= 0``.

    Attributes
    ----------
    c : np.ndarray
        Objective coefficients, length k.
    A : np.ndarray
        Constraint matrix, rows x k.
    b : np.ndarray
        Right-hand sides, one per row.
    name : str
        Label used in logs and tables.
    """
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    name: str = "lp"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        rows, k = self.A.shape
        if k < 1 or rows < 1:
            raise InstanceError(f"{self.name}: needs at least one row and one variable")
        if len(self.c) != k or len(self.b) != rows:
            raise InstanceError(f"{self.name}: c has {len(self.c)}, b has {len(self.b)} entries for a {rows}x{k} matrix")
        for label, arr in (("c", self.c), ("A", self.A), ("b", self.b)):
            if not np.all(np.isfinite(arr)):
                raise InstanceError(f"{self.name}: {label} has non-finite entries")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class LpSolution:
    status: str
    objective: float
    primal: np.ndarray
    dual: np.ndarray
    iterations: int = 0
    bland_pivots: int = 0

    @property
    def reciprocal(self) -> float:
        return 1.0 / self.objective

    def certify(self, lp: LpInstance, feasibility_tol: float = 1e-9, gap_tol: float = 1e-7) -> bool:
        """Checks primal feasibility, dual feasibility and a zero duality gap."""
        if self.status != OPTIMAL:
            return False
        w, y = self.primal, self.dual
        primal_ok = np.all(lp.A @ w <= lp.b + feasibility_tol) and np.all(w >= -feasibility_tol)
        dual_ok = np.all(lp.A.T @ y >= lp.c - gap_tol) and np.all(y >= -feasibility_tol)
        gap = abs(float(lp.c @ w) - float(lp.b @ y))
        return bool(primal_ok and dual_ok and gap <= gap_tol * max(1.0, abs(self.objective)))


@dataclass
class _Tableau:
    M: np.ndarray
    rhs: np.ndarray
    basis: np.ndarray
    sign: np.ndarray
    k: int
    artificial: np.ndarray
    B_inv: np.ndarray = field(init=False)
    x_B: np.ndarray = field(init=False)

    def refactor(self) -> None:
        self.B_inv = np.linalg.inv(self.M[:, self.basis])
        self.x_B = self.B_inv @ self.rhs
        self.x_B[np.abs(self.x_B) < 1e-13] = 0.0


class RevisedSimplex:
    """
    Dense revised simplex with an explicit basis inverse.

    The inverse is updated by rank-one eta steps and refactorized every
    ``refactor_every`` pivots. Pricing is Dantzig's most-negative reduced cost;
    after ``10 k`` consecutive degenerate pivots it switches to Bland's rule
    until the next pivot that makes progress. Rows with negative right-hand
    side get an artificial variable and a phase-one pass.
    """
    def __init__(
        self,
        lp: LpInstance,
        max_iterations: Optional[int] = None,
        tol: float = 1e-9,
        pivot_tol: float = 1e-11,
        refactor_every: int = 100,
    ):
        self.lp = lp
        rows, k = lp.shape
        self.max_iterations = max_iterations or 50 * (rows + k)
        self.tol = tol
        self.pivot_tol = pivot_tol
        self.refactor_every = refactor_every
        self.degenerate_limit = 10 * k
        self.iterations = 0
        self.bland_pivots = 0

    def _standard_form(self) -> _Tableau:
        lp = self.lp
        rows, k = lp.shape
        sign = np.where(lp.b < 0, -1.0, 1.0)
        flipped = np.flatnonzero(sign < 0)
        artificial_block = np.zeros((rows, len(flipped)))
        artificial_block[flipped, np.arange(len(flipped))] = 1.0
        M = np.hstack([sign[:, None] * lp.A, np.diag(sign), artificial_block])
        basis = np.arange(k, k + rows)
        basis[flipped] = k + rows + np.arange(len(flipped))
        artificial = np.zeros(M.shape[1], dtype=bool)
        artificial[k + rows:] = True
        tableau = _Tableau(M=M, rhs=sign * lp.b, basis=basis, sign=sign, k=k, artificial=artificial)
        tableau.refactor()
        return tableau

    def _iterate(self, t: _Tableau, cost: np.ndarray, allowed: np.ndarray) -> str:
        degenerate = 0
        since_refactor = 0
        while True:
            if self.iterations >= self.max_iterations:
                return ITERATION_LIMIT
            if since_refactor >= self.refactor_every:
                t.refactor()
                since_refactor = 0
                logger.debug(f"refactorized basis at iteration {self.iterations}")

            y = cost[t.basis] @ t.B_inv
            reduced = cost - y @ t.M
            reduced[t.basis] = 0.0
            reduced[~allowed] = 0.0
            bland = degenerate >= self.degenerate_limit
            if bland:
                candidates = np.flatnonzero(reduced < -self.tol)
                if len(candidates) == 0:
                    return OPTIMAL
                entering = int(candidates[0])
                self.bland_pivots += 1
            else:
                entering = int(np.argmin(reduced))
                if reduced[entering] >= -self.tol:
                    return OPTIMAL

            u = t.B_inv @ t.M[:, entering]
            positive = u > self.pivot_tol
            if not positive.any():
                return UNBOUNDED
            ratios = np.full(len(u), np.inf)
            ratios[positive] = t.x_B[positive] / u[positive]
            theta = ratios.min()
            ties = np.flatnonzero(ratios <= theta + 1e-12)
            if bland:
                r = int(ties[np.argmin(t.basis[ties])])
            else:
                r = int(ties[np.argmax(u[ties])])

            if theta <= self.tol:
                degenerate += 1
                if degenerate == self.degenerate_limit:
                    logger.warning(f"{self.lp.name}: {degenerate} degenerate pivots, switching to Bland's rule")
            else:
                degenerate = 0
            self._pivot(t, r, entering, u, theta)
            self.iterations += 1
            since_refactor += 1

    @staticmethod
    def _pivot(t: _Tableau, r: int, entering: int, u: np.ndarray, theta: float) -> None:
        t.x_B = t.x_B - theta * u
        t.x_B[r] = theta
        t.x_B[(t.x_B < 0) & (t.x_B > -1e-12)] = 0.0
        pivot_row = t.B_inv[r] / u[r]
        eta = u.copy()
        eta[r] = 0.0
        t.B_inv = t.B_inv - np.outer(eta, pivot_row)
        t.B_inv[r] = pivot_row
        t.basis[r] = entering

    def _drive_out_artificials(self, t: _Tableau) -> None:
        for r in range(len(t.basis)):
            if not t.artificial[t.basis[r]]:
                continue
            row = t.B_inv[r] @ t.M
            row[t.artificial] = 0.0
            row[t.basis] = 0.0
            candidates = np.flatnonzero(np.abs(row) > 1e-9)
            if len(candidates) == 0:
                continue
            entering = int(candidates[0])
            u = t.B_inv @ t.M[:, entering]
            self._pivot(t, r, entering, u, 0.0)

    def _solution(self, t: _Tableau, status: str, cost: np.ndarray) -> LpSolution:
        lp = self.lp
        rows, k = lp.shape
        x = np.zeros(t.M.shape[1])
        x[t.basis] = t.x_B
        w = np.maximum(x[:k], 0.0)
        y = -(cost[t.basis] @ t.B_inv) * t.sign
        return LpSolution(
            status=status,
            objective=float(lp.c @ w),
            primal=w,
            dual=y,
            iterations=self.iterations,
            bland_pivots=self.bland_pivots,
        )

    def solve(self) -> LpSolution:
        lp = self.lp
        rows, k = lp.shape
        t = self._standard_form()
        total = t.M.shape[1]
        if t.artificial.any():
            phase_one = t.artificial.astype(np.float64)
            status = self._iterate(t, phase_one, np.ones(total, dtype=bool))
            t.refactor()
            if status == ITERATION_LIMIT:
                return self._solution(t, status, phase_one)
            if float(t.x_B[t.artificial[t.basis]].sum()) > 1e-9 * max(1.0, float(np.abs(t.rhs).max())):
                logger.info(f"{lp.name}: infeasible")
                return LpSolution(INFEASIBLE, float("nan"), np.zeros(k), np.zeros(rows), self.iterations)
            self._drive_out_artificials(t)
            t.refactor()

        cost = np.zeros(total)
        cost[:k] = -lp.c
        status = self._iterate(t, cost, ~t.artificial)
        t.refactor()
        solution = self._solution(t, status, cost)
        logger.debug(f"{lp.name}: {status} after {self.iterations} pivots, value {solution.objective:.10f}")
        return solution


def solve_lp(lp: LpInstance, max_iterations: Optional[int] = None) -> LpSolution:
    """Solves ``lp`` with the revised simplex; non-optimal outcomes are reported in ``status``."""
    return RevisedSimplex(lp, max_iterations=max_iterations).solve()
