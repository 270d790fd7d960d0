"""Column-wise constrained l1 inverse estimation (CLIME) and its symmetrisation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._validation import NumericalError, ValidationError, check_symmetric
from .lp import LpProblem, solve_lp

__all__ = ["ClimeConfig", "solve_clime", "symmetrize", "clime_inverse"]


@dataclass
class ClimeConfig:
    ell: float = None
    auto_ell: bool = True
    c: float = 2.0
    backend: str = "simplex"
    n_jobs: int = 1

    def __post_init__(self):
        if self.ell is not None:
            if not (np.isfinite(self.ell) and self.ell > 0):
                raise ValidationError(f"ell must be positive, got {self.ell}")
            self.auto_ell = False
        elif not self.auto_ell:
            raise ValidationError("either ell or auto_ell must be given")

    def resolve(self, d: int, n: int = None) -> float:
        if not self.auto_ell:
            return float(self.ell)
        if n is None:
            raise ValidationError("auto_ell needs the sample size n")
        return self.c * float(np.sqrt(np.log(max(d, 2)) / n))


def _column(M2: np.ndarray, i: int, d: int, ell: float, backend: str) -> np.ndarray:
    e = np.zeros(d)
    e[i] = 1.0
    sol = solve_lp(LpProblem(np.ones(2 * d), M2, np.r_[ell + e, ell - e]), backend=backend)
    if not sol.success:
        raise NumericalError(f"CLIME column {i} is {sol.status} at ell={ell:.3g}; "
                             "increase ell")
    return sol.x[:d] - sol.x[d:]


def solve_clime(M, cfg: ClimeConfig, n: int = None) -> np.ndarray:
    """Approximate inverse whose column ``i`` solves ``min |u|_1  s.t. |M u - e_i|_inf <= ell``.

    ``M`` must be symmetric to within ``1e-8`` (relative).  The result is
    not symmetrised; see :func:`symmetrize`.
    """
    M = check_symmetric(M, "M")
    d = M.shape[0]
    ell = cfg.resolve(d, n)
    M2 = np.block([[M, -M], [-M, M]])
    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            cols = list(pool.map(lambda i: _column(M2, i, d, ell, cfg.backend), range(d)))
    else:
        cols = [_column(M2, i, d, ell, cfg.backend) for i in range(d)]
    return np.column_stack(cols)


def symmetrize(U1) -> np.ndarray:
    """Keep, for each pair ``(i, j)``, whichever of ``U1[i, j]``, ``U1[j, i]`` is smaller in magnitude.

    Ties go to the upper-triangle entry.
    """
    U1 = np.asarray(U1, dtype=float)
    if U1.ndim != 2 or U1.shape[0] != U1.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {U1.shape}")
    upper = np.triu(U1)
    lower_t = np.triu(U1.T)
    pick = np.where(np.abs(upper) <= np.abs(lower_t), upper, lower_t)
    return np.triu(pick) + np.triu(pick, 1).T


def clime_inverse(M, cfg: ClimeConfig, n: int = None) -> tuple[np.ndarray, float]:
    """Symmetrise ``M`` as ``(M + M')/2``, run CLIME and symmetrise the result.

    Returns the estimate and the max-norm asymmetry of the input.
    """
    M = np.asarray(M, dtype=float)
    asym = float(np.max(np.abs(M - M.T), initial=0.0))
    return symmetrize(solve_clime((M + M.T) / 2, cfg, n)), asym
