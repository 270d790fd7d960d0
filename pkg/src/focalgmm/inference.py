"""Confidence intervals and tests for the debiased targets.

Critical values come either from the maximum of independent standard
normals or from a block multiplier bootstrap of the estimated influence
scores.  Bootstrap multipliers for replicate ``r`` are drawn from a stream
keyed by ``(seed, r)`` in block order, so results do not depend on how the
replicates are scheduled.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError
from .debias import EstimateBundle

__all__ = [
    "InferenceConfig",
    "InferenceReport",
    "asymptotic_sigmas",
    "sandwich_sigmas",
    "gaussian_max_quantile",
    "block_multiplier_bootstrap",
    "make_report",
    "infer",
]


@dataclass
class InferenceConfig:
    alpha: float = 0.05
    S: np.ndarray = None
    method: str = "gaussian_max"
    n_boot: int = 1000
    block_size: int = None
    mc_draws: int = 100_000
    seed: int = 0
    individual: bool = False
    variance: str = "sandwich"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.variance not in ("sandwich", "bhat"):
            raise ValidationError(f"unknown variance estimator {self.variance!r}")
        if self.method not in ("gaussian_max", "block_bootstrap"):
            raise ValidationError(f"unknown inference method {self.method!r}")
        if self.S is not None:
            self.S = np.asarray(self.S, dtype=int).ravel()
            if self.S.size == 0:
                raise ValidationError("S must be nonempty")

    def resolve_block_size(self, n: int) -> int:
        b = self.block_size if self.block_size is not None else _icbrt(n)
        if not 1 <= b <= n:
            raise ValidationError(f"block size {b} must lie in [1, {n}]")
        return b


def _icbrt(n: int) -> int:
    # floor(n^{1/3}) without the float error at perfect cubes
    b = int(round(n ** (1 / 3)))
    while b ** 3 > n:
        b -= 1
    while (b + 1) ** 3 <= n:
        b += 1
    return max(1, b)


@dataclass
class InferenceReport:
    S: np.ndarray
    estimate: np.ndarray
    sigma_hat: np.ndarray
    critical_value: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    reject: np.ndarray
    alpha: float
    n: int
    names: list = None
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "S": self.S.tolist(), "estimate": self.estimate.tolist(),
            "sigma_hat": self.sigma_hat.tolist(),
            "critical_value": np.atleast_1d(self.critical_value).tolist(),
            "ci_lower": self.ci_lower.tolist(), "ci_upper": self.ci_upper.tolist(),
            "reject": self.reject.tolist(), "alpha": self.alpha, "n": self.n,
            "names": self.names, "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InferenceReport":
        return cls(S=np.asarray(d["S"], dtype=int), estimate=np.asarray(d["estimate"]),
                   sigma_hat=np.asarray(d["sigma_hat"]),
                   critical_value=np.asarray(d["critical_value"]),
                   ci_lower=np.asarray(d["ci_lower"]), ci_upper=np.asarray(d["ci_upper"]),
                   reject=np.asarray(d["reject"], dtype=bool), alpha=d["alpha"], n=d["n"],
                   names=d.get("names"), warnings=d.get("warnings", []))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "name", "estimate", "sigma_hat", "critical_value",
                    "ci_lower", "ci_upper", "reject"])
        crit = np.broadcast_to(np.atleast_1d(self.critical_value), self.S.shape)
        for r, j in enumerate(self.S):
            name = self.names[r] if self.names else str(j)
            w.writerow([int(j), name, repr(float(self.estimate[r])),
                        repr(float(self.sigma_hat[r])), repr(float(crit[r])),
                        repr(float(self.ci_lower[r])), repr(float(self.ci_upper[r])),
                        int(self.reject[r])])
        return buf.getvalue()


def asymptotic_sigmas(B_hat, S=None) -> tuple[np.ndarray, list]:
    """``sqrt(max(B_jj, 0))`` over ``S``; clipped coordinates are reported."""
    diag = np.diag(np.atleast_2d(np.asarray(B_hat, dtype=float)))
    if S is not None:
        diag = diag[np.asarray(S, dtype=int)]
    notes = []
    neg = np.flatnonzero(diag < 0)
    if neg.size:
        msg = f"negative variance estimates clipped to 0 at positions {neg.tolist()}"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    return np.sqrt(np.maximum(diag, 0.0)), notes


def sandwich_sigmas(scores, zeta_rows, block_size: int = 1) -> np.ndarray:
    """Block long-run standard deviations of the influence terms ``zeta_j' g_t``.

    ``sigma_j^2 = (l_n b)^{-1} sum_i (sum_{t in block i} zeta_j' (g_t - gbar))^2``
    over the same blocks the bootstrap uses; ``block_size=1`` is the plain
    sandwich ``zeta Omega zeta'`` with centred scores.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    zeta = np.atleast_2d(np.asarray(zeta_rows, dtype=float))
    n = scores.shape[0]
    if not 1 <= block_size <= n:
        raise ValidationError(f"block size {block_size} must lie in [1, {n}]")
    n_blocks = n // block_size
    proj = (scores - scores.mean(axis=0)) @ zeta.T
    sums = proj[: n_blocks * block_size].reshape(n_blocks, block_size, -1).sum(axis=1)
    return np.sqrt((sums ** 2).sum(axis=0) / (n_blocks * block_size))


def gaussian_max_quantile(size: int, alpha: float, mc_draws: int = 100_000, seed: int = 0) -> float:
    """Monte Carlo ``1 - alpha`` quantile of ``max_{j<size} |Z_j|`` for iid standard normals."""
    if size < 1:
        raise ValidationError("need at least one coordinate")
    rng = np.random.default_rng(seed)
    chunk = max(1, min(mc_draws, 4_000_000 // size))
    maxima = []
    left = mc_draws
    while left > 0:
        m = min(chunk, left)
        maxima.append(np.abs(rng.standard_normal((m, size))).max(axis=1))
        left -= m
    return float(np.quantile(np.concatenate(maxima), 1 - alpha))


def _multipliers(seed: int, n_boot: int, n_blocks: int) -> np.ndarray:
    out = np.empty((n_boot, n_blocks))
    for r in range(n_boot):
        out[r] = np.random.default_rng([seed, r]).standard_normal(n_blocks)
    return out


def block_multiplier_bootstrap(scores, zeta_rows, sigma, cfg: InferenceConfig,
                               return_draws: bool = False):
    """Quantile of ``max_j |T_j / sigma_j|`` under Gaussian block multipliers.

    ``T_j = -n^{-1/2} sum_i e_i sum_{l in block i} zeta_j' g_l``.  Blocks of
    length ``b`` tile ``1..l_n b`` with ``l_n = floor(n / b)``; trailing
    observations are dropped.  With ``cfg.individual`` one quantile per
    coordinate is returned instead of the simultaneous one.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    zeta = np.atleast_2d(np.asarray(zeta_rows, dtype=float))
    sigma = np.asarray(sigma, dtype=float).ravel()
    n = scores.shape[0]
    b = cfg.resolve_block_size(n)
    if cfg.n_boot < 100:
        warnings.warn(f"only {cfg.n_boot} bootstrap draws", RuntimeWarning, stacklevel=2)
    n_blocks = n // b
    proj = scores[: n_blocks * b] @ zeta.T                      # (l_n b) x |S|
    block_sums = proj.reshape(n_blocks, b, -1).sum(axis=1)      # l_n x |S|
    e = _multipliers(cfg.seed, cfg.n_boot, n_blocks)
    T = -(e @ block_sums) / np.sqrt(n)                          # n_boot x |S|
    ok = sigma > 0
    stud = np.zeros_like(T)
    stud[:, ok] = np.abs(T[:, ok]) / sigma[ok]
    if not np.all(ok):
        warnings.warn("coordinates with zero sigma are left out of the bootstrap maximum",
                      RuntimeWarning, stacklevel=2)
    if cfg.individual:
        crit = np.quantile(stud, 1 - cfg.alpha, axis=0)
    else:
        crit = float(np.quantile(stud.max(axis=1), 1 - cfg.alpha))
    return (crit, stud) if return_draws else crit


def make_report(theta_check1, sigma, crit, n: int, alpha: float, S=None, names=None,
                notes=None) -> InferenceReport:
    """Intervals ``theta_j -/+ crit * sigma_j / sqrt(n)`` and the tests of ``theta_j = 0``."""
    est = np.asarray(theta_check1, dtype=float).ravel()
    S = np.arange(est.size) if S is None else np.asarray(S, dtype=int).ravel()
    if est.size != S.size:
        est = est[S]
    sigma = np.asarray(sigma, dtype=float).ravel()
    crit = np.asarray(crit, dtype=float)
    half = np.broadcast_to(crit, est.shape) * sigma / np.sqrt(n)
    lo, hi = est - half, est + half
    reject = (lo > 0) | (hi < 0)
    return InferenceReport(S=S, estimate=est, sigma_hat=sigma, critical_value=crit,
                           ci_lower=lo, ci_upper=hi, reject=reject, alpha=alpha, n=int(n),
                           names=names, warnings=list(notes or []))


def infer(bundle: EstimateBundle, cfg: InferenceConfig = None, names=None) -> InferenceReport:
    """Run the configured inference on every coordinate of ``S`` (default: all targets).

    ``cfg.variance="sandwich"`` estimates ``sigma_j`` from the block long-run
    variance of ``zeta_j' g_t``; ``"bhat"`` uses ``sqrt(B_jj)``, which is only
    valid when the weight matrix is close to the inverse of ``Omega``.
    """
    cfg = cfg or InferenceConfig()
    k1 = bundle.theta_check1.size
    S = np.arange(k1) if cfg.S is None else cfg.S
    if S.min() < 0 or S.max() >= k1:
        raise ValidationError(f"S must index 0..{k1 - 1}")
    if cfg.variance == "bhat":
        sigma, notes = asymptotic_sigmas(bundle.B_hat, S)
    else:
        zeta = bundle.zeta()[S]
        sigma = sandwich_sigmas(bundle.scores, zeta, cfg.resolve_block_size(bundle.n))
        notes = []
    if cfg.method == "gaussian_max":
        size = 1 if cfg.individual else S.size
        crit = gaussian_max_quantile(size, cfg.alpha, cfg.mc_draws, cfg.seed)
    else:
        zeta = bundle.zeta()[S]
        crit = block_multiplier_bootstrap(bundle.scores, zeta, sigma, cfg)
    sel_names = [names[j] for j in S] if names is not None else None
    return make_report(bundle.theta_check1[S], sigma, crit, bundle.n, cfg.alpha, S,
                       sel_names, notes)
