"""Orthogonalised one-step correction of the first-stage estimate."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from ._validation import NumericalError, ValidationError, check_condition
from .clime import ClimeConfig, clime_inverse
from .model import PanelData, TransformSpec, gradient_contribution_std

__all__ = [
    "EstimateBundle",
    "CorrectionConfig",
    "estimate_omega",
    "threshold_gradient",
    "default_threshold",
    "exact_inverse",
    "build_correction",
    "debias",
    "reestimate_common",
]


@dataclass
class EstimateBundle:
    """Everything the inference stage needs from one fit."""

    theta_hat: np.ndarray
    theta_check1: np.ndarray
    Omega_hat: np.ndarray
    Upsilon_hat: np.ndarray
    G1_hat: np.ndarray
    G2_hat: np.ndarray
    Pi_hat: np.ndarray
    Xi_hat: np.ndarray
    F_hat: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    scores: np.ndarray
    theta1_index: np.ndarray = None
    n: int = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "n":
                continue
            if v is not None:
                setattr(self, f.name, np.asarray(v, dtype=int if f.name == "theta1_index" else float))
        if self.n is None:
            self.n = int(self.scores.shape[0])
        k1, q = self.A_hat.shape
        if self.B_hat.shape != (k1, k1) or self.G1_hat.shape != (q, k1):
            raise ValidationError("bundle dimensions are inconsistent")
        if self.Omega_hat.shape != (q, q) or self.scores.shape[1] != q:
            raise ValidationError("bundle dimensions are inconsistent")

    @property
    def AG1(self) -> np.ndarray:
        return self.A_hat @ self.G1_hat

    def zeta(self) -> np.ndarray:
        """Rows of ``(A G1)^{-1} A``: the influence of each score on each target."""
        return np.linalg.solve(self.AG1, self.A_hat)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EstimateBundle":
        kw = {f.name: d[f.name] for f in fields(cls) if f.name in d}
        for name in ("Xi_hat", "Pi_hat", "F_hat", "B_hat"):
            if name in kw and np.asarray(kw[name]).size == 0:
                kw[name] = np.zeros((0, 0))
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class CorrectionConfig:
    """How ``Upsilon``, ``Pi`` and ``Xi`` are inverted.

    ``exact=True`` replaces CLIME by dense inverses (cross-validation path);
    it is refused when the matrix is ill-conditioned.  ``inner`` sets the
    CLIME tolerance of ``Pi`` and ``Xi`` separately; by default they share
    ``clime``.  ``b_form`` picks the sign of ``F`` in ``B`` (see
    :func:`build_correction`).
    """

    clime: ClimeConfig = None
    exact: bool = False
    standardize: bool = False
    inner: ClimeConfig = None
    b_form: str = "plus"

    def __post_init__(self):
        if self.b_form not in ("plus", "schur"):
            raise ValidationError(f"b_form must be 'plus' or 'schur', got {self.b_form!r}")
        if self.clime is None:
            self.clime = ClimeConfig()
        if self.inner is None:
            self.inner = self.clime


def estimate_omega(scores) -> np.ndarray:
    """``E_n[g_t g_t']`` with ``1/n`` normalisation."""
    s = np.atleast_2d(np.asarray(scores, dtype=float))
    if s.shape[0] < 1:
        raise ValidationError("need at least one score row")
    return s.T @ s / s.shape[0]


def threshold_gradient(G, T) -> np.ndarray:
    """Hard threshold: entries with ``|G_ij| > T_ij`` survive, the rest are zeroed.

    ``T`` is a scalar or broadcastable array of non-negative levels.
    """
    G = np.asarray(G, dtype=float)
    T = np.asarray(T, dtype=float)
    if np.any(T < 0):
        raise ValidationError("threshold must be non-negative")
    return np.where(np.abs(G) > T, G, 0.0)


def default_threshold(data: PanelData, spec: TransformSpec, c: float = 2.0,
                      scale: str = "entry") -> np.ndarray:
    """``c * sd * sqrt(log P_n / n)`` with ``P_n = max(q, n, e)``.

    ``scale="entry"`` uses each entry's own standard deviation over ``t``;
    ``scale="max"`` uses the largest one for every entry.
    """
    sd = gradient_contribution_std(data, spec)
    if scale == "max":
        sd = np.full_like(sd, sd.max(initial=0.0))
    elif scale != "entry":
        raise ValidationError(f"unknown threshold scale {scale!r}")
    Pn = max(data.q, data.n, np.e)
    return c * sd * np.sqrt(np.log(Pn) / data.n)


def exact_inverse(M, name: str = "matrix", limit: float = 1e10) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    M = (M + M.T) / 2
    check_condition(M, name, limit)
    return np.linalg.inv(M)


def _approx_inverse(M, cfg: CorrectionConfig, n: int, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((0, 0))
    if cfg.exact:
        return exact_inverse(M, name)
    if cfg.standardize:
        d = np.sqrt(np.clip(np.diag(M), 1e-300, None))
        inv, _ = clime_inverse(M / np.outer(d, d), cfg.inner, n)
        return inv / np.outer(d, d)
    inv, _ = clime_inverse(M, cfg.inner, n)
    return inv


def build_correction(G1, G2, Upsilon, cfg: CorrectionConfig = None, n: int = None):
    """Assemble ``(A, B, Pi, Xi, F)`` of the orthogonalised Newton step.

    ``Pi`` and ``Xi`` approximate the inverses of ``G1' U G1`` and
    ``G2' U G2``.  With ``cfg.b_form="plus"`` (default) ``B`` equals
    ``(Pi^{-1} + F)^{-1}``; ``"schur"`` gives ``(Pi^{-1} - F)^{-1}``, which is
    the exact inverse of ``A G1`` when ``Pi`` and ``Xi`` are exact.  Both are
    written through the Woodbury identity so only a ``K1 x K1`` dense solve
    is needed.  The two coincide when there is no nuisance block.
    """
    cfg = cfg or CorrectionConfig()
    G1 = np.atleast_2d(np.asarray(G1, dtype=float))
    U = np.asarray(Upsilon, dtype=float)
    q, k1 = G1.shape
    G2 = np.zeros((q, 0)) if G2 is None else np.asarray(G2, dtype=float).reshape(q, -1)
    if U.shape != (q, q):
        raise ValidationError(f"Upsilon is {U.shape}, expected {(q, q)}")
    UG1 = U @ G1
    Pi = _approx_inverse(G1.T @ UG1, cfg, n, "G1' U G1")
    if G2.shape[1] == 0:
        Xi = np.zeros((0, 0))
        F = np.zeros((k1, k1))
        A = UG1.T
        B = Pi
        return A, B, Pi, Xi, F
    UG2 = U @ G2
    Xi = _approx_inverse(G2.T @ UG2, cfg, n, "G2' U G2")
    C = G1.T @ UG2                     # K1 x K2
    F = C @ Xi @ C.T
    A = UG1.T - C @ Xi @ UG2.T
    sign = 1.0 if cfg.b_form == "plus" else -1.0
    inner = np.eye(k1) + sign * F @ Pi
    try:
        check_condition(inner, "I + F Pi" if sign > 0 else "I - F Pi", 1e12)
    except NumericalError as exc:
        raise NumericalError(f"{exc}; increase the CLIME ell") from None
    B = Pi - sign * Pi @ np.linalg.solve(inner, F @ Pi)
    return A, B, Pi, Xi, F


def debias(theta_hat, bundle: EstimateBundle, g_at_theta_hat) -> np.ndarray:
    """``theta1_hat - B A g_hat(theta_hat)``."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta1 = theta_hat[bundle.theta1_index] if bundle.theta1_index is not None else theta_hat
    return theta1 - bundle.B_hat @ (bundle.A_hat @ np.asarray(g_at_theta_hat, dtype=float))


def reestimate_common(theta_check1, data: PanelData, spec: TransformSpec, instruments) -> np.ndarray:
    """Pooled 2SLS for the nuisance block with the target block held at ``theta_check1``.

    Equation ``j`` contributes regressors ``xt_{j,t}[theta2]`` and outcome
    ``y_{j,t} - xt_{j,t}[theta1]' theta_check1``; sums run over ``j`` and
    ``t``.  ``instruments[j]`` is ``n x L`` with the same ``L >= K2`` for
    every equation.  Column ``l`` should mean the same thing for every
    unit (own lag, first neighbour and so on); handing all units one shared
    matrix can make the pooled moments uninformative.
    """
    t1, t2 = spec.theta1, spec.theta2
    k2 = t2.size
    full = np.zeros(spec.K)
    full[t1] = np.asarray(theta_check1, dtype=float)
    L = np.asarray(instruments[0]).shape[1]
    if L < k2:
        raise ValidationError(f"{L} pooled instruments for {k2} common parameters")
    Sxz = np.zeros((k2, L))
    Szz = np.zeros((L, L))
    Szy = np.zeros(L)
    pos = {int(c): i for i, c in enumerate(t2)}
    for j in range(spec.p):
        zt = np.asarray(instruments[j], dtype=float)
        if zt.shape != (data.n, L):
            raise ValidationError(f"instruments[{j}] has shape {zt.shape}, expected {(data.n, L)}")
        xt = data.x[j] @ spec.blocks[j]
        cols = spec.columns[j]
        X2 = np.zeros((data.n, k2))
        ytil = data.y[:, j].copy()
        for c, g in enumerate(cols):
            if g in pos:
                X2[:, pos[g]] += xt[:, c]
            else:
                ytil -= xt[:, c] * full[g]
        Sxz += X2.T @ zt
        Szz += zt.T @ zt
        Szy += zt.T @ ytil
    check_condition(Szz, "sum of z z'", 1e12)
    P = np.linalg.solve(Szz, Sxz.T)    # L x K2
    lhs = Sxz @ P
    check_condition(lhs, "pooled 2SLS normal matrix", 1e12)
    return np.linalg.solve(lhs, P.T @ Szy)
