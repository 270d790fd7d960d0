"""Two-fold sample-splitting estimator for a low-dimensional target block."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import NumericalError, ValidationError, check_condition
from .debias import CorrectionConfig
from .estimator import correction_bundle, first_stage
from .model import PanelData, TransformSpec
from .rmd import RmdConfig

__all__ = ["SplitPlan", "SplitResult", "split_estimate"]


@dataclass(frozen=True)
class SplitPlan:
    """Halves ``[0, cut)`` and ``[cut, n)`` along time, ``cut = floor(n / 2)``."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("cannot split fewer than 2 periods")

    @property
    def cut(self) -> int:
        return self.n // 2

    @property
    def halves(self) -> tuple[np.ndarray, np.ndarray]:
        return np.arange(self.cut), np.arange(self.cut, self.n)


@dataclass
class SplitResult:
    theta1: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    theta_hat: tuple
    B_hat: np.ndarray
    cross: bool

    def residual(self) -> float:
        return float(np.max(np.abs(self.lhs @ self.theta1 - self.rhs), initial=0.0))


def split_estimate(data: PanelData, spec: TransformSpec, rmd_cfg: RmdConfig = None,
                   corr_cfg: CorrectionConfig = None, cross: bool = True,
                   threshold_c: float = 1.0, threshold_scale: str = "entry",
                   min_n: int = 20) -> SplitResult:
    """Zero of the averaged orthogonalised moment over the two halves.

    Each half ``i`` gets its own first-stage estimate.  With ``cross=True``
    half ``i`` builds its correction matrix and fixes the nuisance block at
    the estimate of the other half; with ``cross=False`` it uses its own.
    For linear moments the zero solves the ``K1 x K1`` system
    ``sum_i A_i G1_i theta1 = -sum_i A_i (g0_i + G2_i theta2_i)``.
    """
    rmd_cfg = rmd_cfg or RmdConfig()
    corr_cfg = corr_cfg or CorrectionConfig()
    if data.n < min_n:
        raise ValidationError(f"sample splitting needs n >= {min_n}, got {data.n}")
    plan = SplitPlan(data.n)
    parts = [data.take(rows) for rows in plan.halves]
    stages = [first_stage(part, spec, rmd_cfg) for part in parts]
    t1, t2 = spec.theta1, spec.theta2
    k1 = t1.size
    lhs = np.zeros((k1, k1))
    rhs = np.zeros(k1)
    B_sum = np.zeros((k1, k1))
    for i, part in enumerate(parts):
        o = 1 - i if cross else i
        moments = stages[i][0]
        theta_o = stages[o][1].theta
        bundle, _ = correction_bundle(part, spec, moments, theta_o, corr_cfg, threshold_c,
                                      threshold_scale)
        A = bundle.A_hat
        G = moments.G_hat
        lhs += A @ G[:, t1] / 2
        rhs -= A @ (moments.g0_hat + G[:, t2] @ theta_o[t2]) / 2
        B_sum += bundle.B_hat / 2
    try:
        check_condition(lhs, "pooled split system", 1e12)
    except NumericalError as exc:
        raise NumericalError(f"sample-splitting system is singular: {exc}") from None
    theta1 = np.linalg.solve(lhs, rhs)
    return SplitResult(theta1, lhs, rhs, (stages[0][1].theta, stages[1][1].theta), B_sum, cross)
