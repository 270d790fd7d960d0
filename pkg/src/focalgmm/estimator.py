"""Estimator front end that chains the first stage, the correction and inference."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import NumericalError, ValidationError
from .clime import ClimeConfig, clime_inverse
from .debias import (CorrectionConfig, EstimateBundle, build_correction, debias,
                     default_threshold, estimate_omega, exact_inverse, reestimate_common,
                     threshold_gradient)
from .inference import InferenceConfig, InferenceReport, infer
from .model import PanelData, TransformSpec, assemble_linear_moments, evaluate_scores
from .rmd import RmdConfig, select_lambda, solve_rmd

__all__ = ["FitResult", "first_stage", "correction_bundle", "fit_pipeline", "DRGMM"]


@dataclass
class FitResult:
    bundle: EstimateBundle
    theta_check: np.ndarray
    lam: float
    ell: dict
    threshold: float
    escalations: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    theta_check2: np.ndarray = None


def _weight_matrix(Omega, clime_cfg, exact, standardize, n):
    if exact:
        return exact_inverse(Omega, "Omega")
    if standardize:
        d = np.sqrt(np.clip(np.diag(Omega), 1e-300, None))
        U, _ = clime_inverse(Omega / np.outer(d, d), clime_cfg, n)
        return U / np.outer(d, d)
    U, _ = clime_inverse(Omega, clime_cfg, n)
    return U


def first_stage(data: PanelData, spec: TransformSpec, rmd_cfg: RmdConfig):
    """Moment assembly, tuning and the Dantzig fit; returns ``(moments, RmdResult)``."""
    moments = assemble_linear_moments(data, spec)
    lam = select_lambda(moments, data, spec, rmd_cfg)
    return moments, solve_rmd(moments, rmd_cfg, lam)


def correction_bundle(data: PanelData, spec: TransformSpec, moments, theta_hat,
                      corr_cfg: CorrectionConfig, threshold_c: float = 1.0,
                      threshold_scale: str = "entry") -> tuple[EstimateBundle, dict]:
    """Weight matrix, thresholded gradients and ``(A, B, Pi, Xi, F)`` at ``theta_hat``.

    ``theta_check1`` of the returned bundle is already debiased.
    """
    n = data.n
    scores = evaluate_scores(data, spec, theta_hat)
    Omega = estimate_omega(scores)
    Upsilon = _weight_matrix(Omega, corr_cfg.clime, corr_cfg.exact, corr_cfg.standardize, n)
    T = default_threshold(data, spec, threshold_c, threshold_scale)
    G = threshold_gradient(moments.G_hat, T)
    dead = np.flatnonzero(~np.any(G != 0, axis=0))
    if dead.size:
        names = [spec.names[i] for i in dead[:3]]
        raise NumericalError(f"thresholding removed every gradient entry of {names}; "
                             "lower threshold_c or use a longer panel")
    G1, G2 = G[:, spec.theta1], G[:, spec.theta2]
    A, B, Pi, Xi, F = build_correction(G1, G2, Upsilon, corr_cfg, n)
    info = {"threshold": float(np.max(T, initial=0.0))}
    if not corr_cfg.exact:
        info["ell"] = {"Upsilon": corr_cfg.clime.resolve(Omega.shape[0], n),
                       "Pi": corr_cfg.inner.resolve(G1.shape[1], n)}
        if G2.shape[1]:
            info["ell"]["Xi"] = corr_cfg.inner.resolve(G2.shape[1], n)
    bundle = EstimateBundle(theta_hat, np.zeros(spec.theta1.size), Omega, Upsilon, G1, G2,
                            Pi, Xi, F, A, B, scores, spec.theta1, n)
    bundle.theta_check1 = debias(theta_hat, bundle, moments.moments(theta_hat))
    return bundle, info


def fit_pipeline(data: PanelData, spec: TransformSpec, rmd_cfg: RmdConfig = None,
                 corr_cfg: CorrectionConfig = None, threshold_c: float = 1.0,
                 threshold_scale: str = "entry", common_instruments=None) -> FitResult:
    """First-stage RMD fit, weight and inverse estimation, and the debiasing step.

    The returned ``theta_check`` is the full parameter vector with the
    target block replaced by its debiased value (and the common block by the
    pooled re-estimate when ``common_instruments`` is given).
    """
    rmd_cfg = rmd_cfg or RmdConfig()
    corr_cfg = corr_cfg or CorrectionConfig()
    if spec.theta1.size == 0:
        raise ValidationError("no target coordinates in theta1")
    t0 = time.perf_counter()
    moments, res = first_stage(data, spec, rmd_cfg)
    t1 = time.perf_counter()
    bundle, info = correction_bundle(data, spec, moments, res.theta, corr_cfg, threshold_c,
                                     threshold_scale)
    t2 = time.perf_counter()
    theta_check = res.theta.copy()
    theta_check[spec.theta1] = bundle.theta_check1
    theta2 = None
    if common_instruments is not None:
        theta2 = reestimate_common(bundle.theta_check1, data, spec, common_instruments)
        theta_check[spec.theta2] = theta2
    return FitResult(bundle, theta_check, float(res.lam), info.get("ell", {}), info["threshold"],
                     res.escalations, {"rmd": t1 - t0, "correction": t2 - t1}, theta2)


class DRGMM(BaseEstimator):
    """Double-regularised GMM for linear moment systems.

    Parameters
    ----------
    lam : float, optional
        Moment tolerance of the first stage.  Setting it implies
        ``lambda_method="fixed"``.
    lambda_method : {"cv", "rate_rule", "score_bootstrap", "fixed"}
        ``"cv"`` (default) picks the tolerance on a grid below the rate rule
        by contiguous-fold held-out moment loss.
    lambda_c : float
        Constant of the rate rule.
    ell : float, optional
        CLIME tolerance; by default ``clime_c * sqrt(log d / n)`` per matrix.
    clime_c : float
    inner_c : float, optional
        CLIME constant for the ``K x K`` inverses; defaults to ``clime_c``.
    threshold_c : float
        Gradient threshold constant.
    threshold_scale : {"max", "entry"}
    standardize : bool
        Run CLIME on correlation-scaled matrices and scale back.
    exact : bool
        Use dense inverses instead of CLIME (small, well-conditioned problems).
    alpha : float
    method : {"gaussian_max", "block_bootstrap"}
    individual : bool
        Individual (per-coordinate) rather than simultaneous critical values.
    n_boot, block_size : int
    variance : {"sandwich", "bhat"}
        Standard errors from the block sandwich or from ``diag(B)``.
    b_form : {"plus", "schur"}
        Sign of the nuisance term in ``B`` (see :func:`focalgmm.debias.build_correction`).
    backend, clime_backend : {"simplex", "highs"}
        LP backends for the first stage (HiGHS by default, it is much faster
        on the large Dantzig programs) and for CLIME.
    seed : int
    """

    def __init__(self, lam=None, lambda_method="cv", lambda_c=1.1, ell=None, clime_c=2.0,
                 inner_c=None, threshold_c=1.0, threshold_scale="entry", standardize=True, exact=False,
                 alpha=0.05, method="gaussian_max", individual=True, n_boot=1000,
                 block_size=None, variance="sandwich", b_form="plus", backend="highs",
                 clime_backend="simplex", n_jobs=1, seed=0):
        self.lam = lam
        self.lambda_method = lambda_method
        self.lambda_c = lambda_c
        self.ell = ell
        self.clime_c = clime_c
        self.inner_c = inner_c
        self.threshold_c = threshold_c
        self.threshold_scale = threshold_scale
        self.standardize = standardize
        self.exact = exact
        self.alpha = alpha
        self.method = method
        self.individual = individual
        self.n_boot = n_boot
        self.block_size = block_size
        self.variance = variance
        self.b_form = b_form
        self.backend = backend
        self.clime_backend = clime_backend
        self.n_jobs = n_jobs
        self.seed = seed

    def _configs(self):
        method = "fixed" if self.lam is not None else self.lambda_method
        rmd = RmdConfig(lam=self.lam, lambda_method=method, alpha=self.alpha, c=self.lambda_c,
                        seed=self.seed, backend=self.backend)
        clime = ClimeConfig(ell=self.ell, c=self.clime_c, backend=self.clime_backend,
                            n_jobs=self.n_jobs)
        inner = None
        if self.inner_c is not None and self.ell is None:
            inner = ClimeConfig(c=self.inner_c, backend=self.clime_backend, n_jobs=self.n_jobs)
        return rmd, CorrectionConfig(clime=clime, exact=self.exact, standardize=self.standardize,
                                     inner=inner, b_form=self.b_form)

    def fit(self, data: PanelData, spec: TransformSpec, common_instruments=None):
        """Estimate on ``data`` under the parameter layout ``spec``."""
        if not isinstance(data, PanelData) or not isinstance(spec, TransformSpec):
            raise ValidationError("fit expects a PanelData and a TransformSpec")
        rmd, corr = self._configs()
        res = fit_pipeline(data, spec, rmd, corr, self.threshold_c, self.threshold_scale,
                           common_instruments)
        self.spec_ = spec
        self.result_ = res
        self.bundle_ = res.bundle
        self.theta_hat_ = res.bundle.theta_hat
        self.theta_check1_ = res.bundle.theta_check1
        self.coef_ = res.theta_check
        self.lam_ = res.lam
        self.ell_ = res.ell
        self.n_features_in_ = spec.K
        return self

    def predict(self, data: PanelData, debiased: bool = True) -> np.ndarray:
        """Fitted outcomes ``x_j' B_j beta_j`` as an ``n x p`` array."""
        check_is_fitted(self, "coef_")
        theta = self.coef_ if debiased else self.theta_hat_
        b = self.spec_.coefficients(theta)
        return np.column_stack([data.x[j] @ b[j] for j in range(data.p)])

    def transform(self, data: PanelData) -> np.ndarray:
        """Per-period moment scores at the first-stage estimate."""
        check_is_fitted(self, "coef_")
        return evaluate_scores(data, self.spec_, self.theta_hat_)

    def infer(self, S=None, alpha=None, method=None, individual=None) -> InferenceReport:
        check_is_fitted(self, "bundle_")
        cfg = InferenceConfig(alpha=self.alpha if alpha is None else alpha, S=S,
                              method=self.method if method is None else method,
                              n_boot=self.n_boot, block_size=self.block_size, seed=self.seed,
                              individual=self.individual if individual is None else individual,
                              variance=self.variance)
        names = [self.spec_.names[i] for i in self.spec_.theta1]
        return infer(self.bundle_, cfg, names)
