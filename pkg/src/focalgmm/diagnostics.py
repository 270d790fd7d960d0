"""Exhaustive small-instance checks of sparse singular values, RIP and identification.

All routines enumerate index subsets, so they are meant for desk-sized
matrices only; each refuses to run when the subset count exceeds ``cap``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations
from math import comb

import numpy as np
from scipy.linalg import eigh

from ._validation import ValidationError, as_matrix

__all__ = [
    "SparseSpectrumReport",
    "RipReport",
    "sparse_singular_values",
    "kappa_lower_bound",
    "rip_check",
]


@dataclass
class SparseSpectrumReport:
    m: int
    sigma_min_m: float
    sigma_max_m: float
    subsets_evaluated: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RipReport:
    s: int
    sigma_min: float
    sigma_max: float
    lambda_tilde: float
    min_rank: int
    rank_deficient: list
    lemma_holds: bool
    worst_slack: float
    subsets_evaluated: int

    def to_dict(self) -> dict:
        return asdict(self)


def _check_cap(count: int, cap: int):
    if count > cap:
        raise ValidationError(f"{count} subsets exceed the cap of {cap}; use a smaller instance")


def sparse_singular_values(G, m: int, cap: int = 10 ** 6) -> SparseSpectrumReport:
    """``m``-sparse smallest and largest singular values by exhaustive enumeration.

    ``sigma_min(m) = min_{|I|<=m} max_{|H|<=m, |H|>=|I|} sigma_min(G[H, I])`` and
    ``sigma_max(m) = max_{|I|<=m} max_{|H|<=m} sigma_max(G[H, I])``.  Adding
    a row never lowers either singular value and removing a column never
    lowers the smallest one, so both extrema are attained with
    ``|I| = |H| = m`` and only those subsets are visited.
    """
    G = as_matrix(G, "G")
    q, K = G.shape
    if not 1 <= m <= min(q, K):
        raise ValidationError(f"m must lie in [1, {min(q, K)}], got {m}")
    count = comb(K, m) * comb(q, m)
    _check_cap(count, cap)
    rows = list(combinations(range(q), m))
    smin, smax = np.inf, 0.0
    for I in combinations(range(K), m):
        cols = G[:, I]
        best = 0.0
        for H in rows:
            sv = np.linalg.svd(cols[H, :], compute_uv=False)
            best = max(best, sv[-1])
            smax = max(smax, sv[0])
        smin = min(smin, best)
    return SparseSpectrumReport(m, float(smin), float(smax), count)


def _cone_directions(K, I, u, a, trials, rng):
    I = np.asarray(I)
    rest = np.setdiff1d(np.arange(K), I)
    out = [np.eye(K)[i] for i in I]
    for _ in range(trials):
        th = np.zeros(K)
        th[I] = rng.standard_normal(I.size)
        if rest.size and u > 0:
            r = rng.standard_normal(rest.size)
            budget = rng.random() * u * np.abs(th[I]).sum()
            th[rest] = r / np.abs(r).sum() * budget
        out.append(th)
    D = np.array(out)
    norms = np.linalg.norm(D, ord=a, axis=1)
    return D / norms[:, None]


def kappa_lower_bound(G, s: int, u: float, a: float = 2, trials: int = 200,
                      seed: int = 0, cap: int = 10 ** 5) -> dict:
    """Randomised estimate of ``min_{|I|<=s} min_{theta in C_I(u), |theta|_a=1} |G theta|_inf``.

    ``C_I(u) = {theta : |theta_{I^c}|_1 <= u |theta_I|_1}``.  The minimum is
    taken over the unit coordinate directions of ``I`` plus ``trials``
    random cone members for every ``|I| = s`` (cones grow with ``I``), so
    the returned ``value`` is an upper bound on the true constant.
    """
    G = as_matrix(G, "G")
    K = G.shape[1]
    if not 1 <= s <= K or u < 0:
        raise ValidationError("need 1 <= s <= K and u >= 0")
    count = comb(K, s)
    _check_cap(count, cap)
    rng = np.random.default_rng(seed)
    best = np.inf
    for I in combinations(range(K), s):
        D = _cone_directions(K, I, u, a, trials, rng)
        best = min(best, float(np.abs(D @ G.T).max(axis=1).min()))
    return {"value": best, "kind": "upper bound (random search)", "trials_per_subset": trials,
            "subsets_evaluated": count, "s": s, "u": u, "a": a}


def rip_check(X, B, s: int, cap: int = 10 ** 5, tol: float = 1e-10) -> RipReport:
    """Extremal singular values of ``X B_I`` over ``|I| = s`` and the bound that controls them.

    ``lambda_tilde`` is the smallest Rayleigh quotient of ``X'X`` over the
    column spans of the ``B_I``, computed as the generalised eigenvalue of
    ``(B_I' X'X B_I, B_I' B_I)``.  For full-rank ``B_I`` it satisfies
    ``sigma_s(X B_I)^2 >= lambda_tilde * lambda_s(B_I' B_I)``; the smallest
    slack of that inequality is reported.
    """
    X = as_matrix(X, "X")
    B = as_matrix(B, "B")
    if X.shape[1] != B.shape[0]:
        raise ValidationError(f"X has {X.shape[1]} columns, B has {B.shape[0]} rows")
    K = B.shape[1]
    if not 1 <= s <= K:
        raise ValidationError(f"s must lie in [1, {K}]")
    count = comb(K, s)
    _check_cap(count, cap)
    XtX = X.T @ X
    smin, smax, lam_t = np.inf, 0.0, np.inf
    min_rank = s
    deficient = []
    pairs = []
    for I in combinations(range(K), s):
        BI = B[:, I]
        rank = int(np.linalg.matrix_rank(BI))
        min_rank = min(min_rank, rank)
        sv = np.linalg.svd(X @ BI, compute_uv=False)
        sig_s = sv[s - 1] if sv.size >= s else 0.0
        smin = min(smin, sig_s)
        smax = max(smax, sv[0])
        if rank < s:
            deficient.append(list(I))
            continue
        BtB = BI.T @ BI
        ev = eigh(BI.T @ XtX @ BI, BtB, eigvals_only=True)
        lam_t = min(lam_t, float(ev[0]))
        pairs.append((sig_s ** 2, float(np.linalg.eigvalsh(BtB)[0])))
    if np.isinf(lam_t):
        lam_t = 0.0
    slack = min((sq - lam_t * lb for sq, lb in pairs), default=np.nan)
    scale = max(1.0, float(np.max(np.abs(XtX))) * float(np.max(np.abs(B)) ** 2))
    holds = bool(np.isnan(slack) or slack >= -tol * scale)
    return RipReport(s, float(smin), float(smax), float(lam_t), min_rank, deficient, holds,
                     float(slack), count)
