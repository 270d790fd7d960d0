"""Dense revised simplex for ``min c'x  s.t.  A_ub x <= b_ub, x >= 0``.

The solver keeps an explicit basis inverse, refactorised periodically, and
uses a deterministic pivot rule so identical inputs always give identical
vertices.  Problems met in this package have at most a few thousand columns,
where dense linear algebra is the simplest reliable option.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["LpProblem", "LpSolution", "solve_lp", "FEAS_TOL", "GAP_TOL"]

FEAS_TOL = 1e-9
GAP_TOL = 1e-8

_PIVOT_TOL = 1e-11
_REFACTOR_EVERY = 64


@dataclass
class LpProblem:
    """``min c'x`` subject to ``A_ub @ x <= b_ub`` and ``x >= 0``."""

    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.A_ub = np.atleast_2d(np.asarray(self.A_ub, dtype=float))
        self.b_ub = np.asarray(self.b_ub, dtype=float).ravel()
        m, n = self.A_ub.shape
        if self.c.shape[0] != n:
            raise ValueError(f"c has length {self.c.shape[0]}, A_ub has {n} columns")
        if self.b_ub.shape[0] != m:
            raise ValueError(f"b_ub has length {self.b_ub.shape[0]}, A_ub has {m} rows")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A_ub))
                and np.all(np.isfinite(self.b_ub))):
            raise ValueError("LP data must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A_ub.shape


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: str  # "optimal" | "infeasible" | "unbounded"
    duality_gap: float = np.nan
    dual: np.ndarray = field(default_factory=lambda: np.empty(0))
    iterations: int = 0
    max_violation: float = np.nan

    @property
    def success(self) -> bool:
        return self.status == "optimal"


class _Simplex:
    """Two-phase revised simplex on ``[A | S | R] z = b``, ``z >= 0``.

    S holds one slack (+1) or surplus (-1) per row, R one artificial per row
    whose right-hand side had to be negated.
    """

    def __init__(self, problem: LpProblem, pivot_rule: str, max_iter: int):
        A, b = problem.A_ub, problem.b_ub
        m, n = A.shape
        self.m, self.n = m, n
        sign = np.where(b < 0, -1.0, 1.0)
        self.sign = sign
        neg = np.flatnonzero(sign < 0)
        self.n_art = neg.size
        # columns: structural | slack | artificial
        self.N = n + m + self.n_art
        M = np.zeros((m, self.N))
        M[:, :n] = A * sign[:, None]
        M[np.arange(m), n + np.arange(m)] = sign
        M[neg, n + m + np.arange(self.n_art)] = 1.0
        self.M = M
        self.b = b * sign
        self.c = np.zeros(self.N)
        self.c[:n] = problem.c
        basis = n + np.arange(m)
        basis[neg] = n + m + np.arange(self.n_art)
        self.basis = basis
        self.pivot_rule = pivot_rule
        self.max_iter = max_iter
        self.iterations = 0
        # the starting basis is diagonal (+-1 slacks and unit artificials)
        self.Binv = np.diag(1.0 / M[np.arange(m), basis])
        self.xB = self.Binv @ self.b
        self._since_refactor = 0

    def _refactor(self):
        self.Binv = np.linalg.inv(self.M[:, self.basis])
        self.xB = self.Binv @ self.b
        # round-off can leave tiny negatives
        self.xB[np.abs(self.xB) < 1e-13] = 0.0
        self._since_refactor = 0

    def _entering(self, reduced: np.ndarray, allowed: np.ndarray, degenerate_run: int):
        candidates = np.flatnonzero(allowed & (reduced < -FEAS_TOL * 10))
        if candidates.size == 0:
            return -1
        if self.pivot_rule == "bland" or degenerate_run > 25:
            return int(candidates[0])
        return int(candidates[np.argmin(reduced[candidates])])

    def _leaving(self, d: np.ndarray, artificial_rows: np.ndarray | None):
        if artificial_rows is not None:
            # a basic artificial at level zero must leave before it can move
            hit = np.flatnonzero(artificial_rows & (np.abs(d) > _PIVOT_TOL))
            if hit.size:
                return int(hit[np.argmin(self.basis[hit])])
        pos = np.flatnonzero(d > _PIVOT_TOL)
        if pos.size == 0:
            return -1
        ratios = self.xB[pos] / d[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        # Bland's tie-break on the leaving side: smallest variable index
        return int(ties[np.argmin(self.basis[ties])])

    def _pivot(self, r: int, j: int, d: np.ndarray):
        theta = self.xB[r] / d[r]
        self.xB -= theta * d
        self.xB[r] = theta
        self.xB[(self.xB < 0) & (self.xB > -1e-12)] = 0.0
        piv_row = self.Binv[r] / d[r]
        self.Binv -= np.outer(d, piv_row)
        self.Binv[r] = piv_row
        self.basis[r] = j
        self._since_refactor += 1
        if self._since_refactor >= _REFACTOR_EVERY:
            self._refactor()
        return theta

    def run(self, cost: np.ndarray, allowed: np.ndarray, guard_artificials: bool) -> str:
        degenerate_run = 0
        is_art = np.zeros(self.N, dtype=bool)
        is_art[self.n + self.m:] = True
        while True:
            if self.iterations >= self.max_iter:
                raise RuntimeError(f"simplex did not converge in {self.max_iter} iterations")
            y = cost[self.basis] @ self.Binv
            reduced = cost - y @ self.M
            reduced[self.basis] = 0.0
            j = self._entering(reduced, allowed, degenerate_run)
            if j < 0:
                return "optimal"
            d = self.Binv @ self.M[:, j]
            art_rows = is_art[self.basis] if guard_artificials else None
            r = self._leaving(d, art_rows)
            if r < 0:
                return "unbounded"
            self.iterations += 1
            step = self._pivot(r, j, d)
            degenerate_run = degenerate_run + 1 if step <= 1e-14 else 0


def _finalize(sx: _Simplex, problem: LpProblem, status: str) -> LpSolution:
    if sx._since_refactor > 8:
        sx._refactor()
    z = np.zeros(sx.N)
    z[sx.basis] = np.maximum(sx.xB, 0.0)
    x = z[: sx.n]
    obj = float(problem.c @ x)
    # duals of the original <= rows (nonpositive at optimality)
    y_eq = sx.c[sx.basis] @ sx.Binv
    dual = y_eq * sx.sign
    dual_obj = float(problem.b_ub @ dual)
    gap = abs(obj - dual_obj) / max(1.0, abs(obj))
    viol = float(np.max(problem.A_ub @ x - problem.b_ub, initial=0.0))
    return LpSolution(x=x, objective=obj, status=status, duality_gap=gap, dual=dual,
                      iterations=sx.iterations, max_violation=max(viol, 0.0))


def solve_lp(problem: LpProblem, tol: float = FEAS_TOL, *, pivot_rule: str = "dantzig",
             max_iter: int | None = None, backend: str = "simplex") -> LpSolution:
    """Solve ``problem`` by two-phase revised simplex.

    Parameters
    ----------
    problem : LpProblem
    tol : float
        Feasibility tolerance used to certify the returned vertex.
    pivot_rule : {"dantzig", "bland"}
        ``"bland"`` always enters the lowest-index improving column.
        ``"dantzig"`` enters the most negative reduced cost and falls back to
        Bland's rule after a run of degenerate pivots, which keeps the
        anti-cycling guarantee.
    max_iter : int, optional
        Defaults to ``50 * (m + n)``.
    backend : {"simplex", "highs"}
        ``"highs"`` hands the problem to SciPy's HiGHS dual simplex instead
        of the in-house solver; the returned solution is certified the same
        way.

    Returns
    -------
    LpSolution
        ``status`` is ``"optimal"``, ``"infeasible"`` or ``"unbounded"``.
        Degenerate problems return *a* minimiser, fixed by the pivot rule.
    """
    if pivot_rule not in ("dantzig", "bland"):
        raise ValueError(f"unknown pivot rule {pivot_rule!r}")
    if backend == "highs":
        return _solve_highs(problem)
    if backend != "simplex":
        raise ValueError(f"unknown backend {backend!r}")
    m, n = problem.shape
    if max_iter is None:
        max_iter = 50 * (m + n) + 100
    sx = _Simplex(problem, pivot_rule, max_iter)

    if sx.n_art:
        cost1 = np.zeros(sx.N)
        cost1[n + m:] = 1.0
        allowed = np.ones(sx.N, dtype=bool)
        sx.run(cost1, allowed, guard_artificials=False)
        if sx._since_refactor > 8:
            sx._refactor()
        infeas = float(cost1[sx.basis] @ sx.xB)
        if infeas > tol * max(1.0, float(np.abs(sx.b).max(initial=0.0))):
            x = np.zeros(n)
            return LpSolution(x=x, objective=np.nan, status="infeasible",
                              iterations=sx.iterations)

    allowed = np.ones(sx.N, dtype=bool)
    allowed[n + m:] = False
    status = sx.run(sx.c, allowed, guard_artificials=sx.n_art > 0)
    if status == "unbounded":
        return LpSolution(x=np.full(n, np.nan), objective=-np.inf, status="unbounded",
                          iterations=sx.iterations)
    return _finalize(sx, problem, status)


def _solve_highs(problem: LpProblem) -> LpSolution:
    from scipy.optimize import linprog

    # HiGHS occasionally stops with an unknown model status on badly scaled
    # Dantzig problems; retry with its interior point and then in-house
    n = problem.shape[1]
    for method in ("highs-ds", "highs-ipm"):
        res = linprog(problem.c, A_ub=problem.A_ub, b_ub=problem.b_ub, bounds=(0, None),
                      method=method)
        if res.status in (0, 2, 3):
            break
    else:
        return solve_lp(problem, backend="simplex")
    if res.status == 2:
        return LpSolution(x=np.zeros(n), objective=np.nan, status="infeasible")
    if res.status == 3:
        return LpSolution(x=np.full(n, np.nan), objective=-np.inf, status="unbounded")
    x = np.maximum(res.x, 0.0)
    obj = float(problem.c @ x)
    dual = np.asarray(res.ineqlin.marginals, dtype=float)
    gap = abs(obj - float(problem.b_ub @ dual)) / max(1.0, abs(obj))
    viol = float(np.max(problem.A_ub @ x - problem.b_ub, initial=0.0))
    return LpSolution(x=x, objective=obj, status="optimal", duality_gap=gap, dual=dual,
                      iterations=int(getattr(res, "nit", 0)), max_violation=max(viol, 0.0))
