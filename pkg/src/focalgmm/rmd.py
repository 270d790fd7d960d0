"""Regularized minimum distance (Dantzig-type) estimation of linear moments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import NumericalError, ValidationError
from .lp import LpProblem, solve_lp
from .model import (LinearMomentSystem, PanelData, TransformSpec, assemble_linear_moments,
                    evaluate_scores)

__all__ = ["RmdConfig", "RmdResult", "dantzig_lp", "solve_rmd", "select_lambda", "pilot_theta"]

_METHODS = ("fixed", "rate_rule", "score_bootstrap", "cv")


@dataclass
class RmdConfig:
    """Tuning of the first-stage estimator.

    ``lam`` is used as given for ``lambda_method="fixed"``; the other
    methods compute it from pilot residuals (see :func:`select_lambda`).
    """

    lam: float = None
    lambda_method: str = "rate_rule"
    alpha: float = 0.05
    ladder_factor: float = 2.0
    c: float = 1.1
    n_boot: int = 1000
    refit: int = 0
    pilot: str = "network"
    n_folds: int = 5
    grid_size: int = 10
    grid_step: float = 2 ** -0.5
    seed: int = 0
    backend: str = "simplex"

    def __post_init__(self):
        if self.pilot not in ("zero", "network"):
            raise ValidationError(f"unknown pilot {self.pilot!r}")
        if self.lambda_method not in _METHODS:
            raise ValidationError(f"lambda_method must be one of {_METHODS}")
        if self.lambda_method == "fixed" and self.lam is None:
            raise ValidationError("lambda_method='fixed' needs lam")
        if self.lam is not None and (not np.isfinite(self.lam) or self.lam < 0):
            raise ValidationError(f"lam must be finite and >= 0, got {self.lam}")
        if not self.ladder_factor > 1:
            raise ValidationError("ladder_factor must exceed 1")
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.n_folds < 2 or self.grid_size < 1 or not 0 < self.grid_step < 1:
            raise ValidationError("cv needs n_folds >= 2, grid_size >= 1 and grid_step in (0, 1)")


@dataclass
class RmdResult:
    theta: np.ndarray
    lam: float
    escalations: list = field(default_factory=list)
    objective: float = np.nan
    duality_gap: float = np.nan


def dantzig_lp(G: np.ndarray, g0: np.ndarray, lam: float) -> LpProblem:
    """``min |theta|_1  s.t.  |G theta + g0|_inf <= lam`` over ``(theta+, theta-) >= 0``."""
    A = np.block([[G, -G], [-G, G]])
    b = np.r_[lam - g0, lam + g0]
    return LpProblem(np.ones(2 * G.shape[1]), A, b)


def solve_rmd(moments: LinearMomentSystem, cfg: RmdConfig, lam: float = None) -> RmdResult:
    """Minimum-l1 parameter whose sample moments are within ``lam`` of zero.

    If the program is infeasible at the requested level the bound is
    multiplied by ``cfg.ladder_factor`` (at most ten times) and every step
    is recorded in ``escalations``.
    """
    if lam is None:
        lam = cfg.lam
    if lam is None:
        raise ValidationError("no lambda given; call select_lambda first")
    G, g0 = moments.G_hat, moments.g0_hat
    if G.shape[0] != g0.shape[0]:
        raise ValidationError(f"G has {G.shape[0]} rows but g0 has {g0.shape[0]}")
    K = G.shape[1]
    escalations = []
    for _ in range(11):
        sol = solve_lp(dantzig_lp(G, g0, lam), backend=cfg.backend)
        if sol.success:
            theta = sol.x[:K] - sol.x[K:]
            return RmdResult(theta, float(lam), escalations, sol.objective, sol.duality_gap)
        if sol.status == "unbounded":
            raise NumericalError("Dantzig program reported unbounded; check the moment data")
        escalations.append(float(lam))
        lam *= cfg.ladder_factor
    raise NumericalError(f"Dantzig program infeasible after escalating lambda to {lam:.3g}")


def select_lambda(moments: LinearMomentSystem, data: PanelData, spec: TransformSpec,
                  cfg: RmdConfig) -> float:
    """Data-driven moment tolerance.

    ``rate_rule``: ``c * max_jm sd(z_jm eps_j) * sqrt(log q / n)``.
    ``score_bootstrap``: the ``1 - alpha`` quantile of ``|E_n[e_t z_t eps_t]|_inf``
    over ``n_boot`` standard normal multiplier draws.  Pilot residuals are
    taken at ``theta = 0`` (``pilot="zero"``) or at the least-squares
    minimum-distance fit of the non-deviation coordinates, i.e. the model
    with the pre-specified network taken as correct (``pilot="network"``).
    They are refreshed ``cfg.refit`` times at the resulting estimate.
    ``cv``: starting from the rate-rule value, a geometric grid of
    ``grid_size`` levels is scored by the held-out moment norm
    ``|g_test(theta_train)|_2`` over ``n_folds`` contiguous time blocks; the
    minimiser is returned.
    """
    n, q = data.n, data.q
    if n < 10:
        raise ValidationError(f"lambda selection needs n >= 10, got {n}")
    if q < 1:
        raise ValidationError("no moment conditions")
    if cfg.lambda_method == "fixed":
        return float(cfg.lam)
    theta = pilot_theta(moments, spec) if cfg.pilot == "network" else np.zeros(spec.K)
    lam = np.nan
    for _ in range(cfg.refit + 1):
        scores = evaluate_scores(data, spec, theta)
        lam = _lambda_from_scores(scores, cfg)
        if cfg.refit:
            theta = solve_rmd(moments, cfg, lam).theta
    if cfg.lambda_method == "cv":
        return _cross_validate(data, spec, cfg, lam)
    return float(lam)


def _cross_validate(data: PanelData, spec: TransformSpec, cfg: RmdConfig, lam0: float) -> float:
    grid = lam0 * cfg.grid_step ** np.arange(cfg.grid_size)
    folds = np.array_split(np.arange(data.n), cfg.n_folds)
    loss = np.zeros(grid.size)
    for rows in folds:
        train = np.setdiff1d(np.arange(data.n), rows)
        m_tr = assemble_linear_moments(data.take(train), spec)
        m_te = assemble_linear_moments(data.take(rows), spec)
        for i, lam in enumerate(grid):
            try:
                theta = solve_rmd(m_tr, cfg, lam).theta
            except NumericalError:
                loss[i] = np.inf
                continue
            loss[i] += float(np.sum(m_te.moments(theta) ** 2))
    return float(grid[int(np.argmin(loss))])


def pilot_theta(moments: LinearMomentSystem, spec: TransformSpec) -> np.ndarray:
    """Minimise ``|G theta + g0|_2`` over the coordinates that are not deviations."""
    theta = np.zeros(spec.K)
    keep = [i for i, nm in enumerate(spec.names) if not nm.startswith("delta")]
    if keep:
        sol, *_ = np.linalg.lstsq(moments.G_hat[:, keep], -moments.g0_hat, rcond=None)
        theta[keep] = sol
    return theta


def _lambda_from_scores(scores: np.ndarray, cfg: RmdConfig) -> float:
    n, q = scores.shape
    if cfg.lambda_method in ("rate_rule", "cv"):
        sd = scores.std(axis=0)
        return cfg.c * float(sd.max()) * np.sqrt(np.log(max(q, 2)) / n)
    rng = np.random.default_rng(cfg.seed)
    e = rng.standard_normal((cfg.n_boot, n))
    stats = np.abs(e @ scores / n).max(axis=1)
    return float(np.quantile(stats, 1 - cfg.alpha))
