"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


class ValidationError(ValueError):
    """Malformed or inconsistent user input."""


class NumericalError(RuntimeError):
    """Singular systems, infeasible programs and similar numerical failures."""


def as_matrix(a, name: str, *, allow_empty: bool = False) -> np.ndarray:
    try:
        out = check_array(a, ensure_2d=True, dtype=np.float64, ensure_all_finite=True,
                          ensure_min_samples=0 if allow_empty else 1,
                          ensure_min_features=0 if allow_empty else 1,
                          input_name=name)
    except ValueError as exc:
        raise ValidationError(f"{name}: {exc}") from exc
    return out


def as_vector(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64).ravel()
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def check_square(M: np.ndarray, name: str) -> np.ndarray:
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {M.shape}")
    return M


def asymmetry(M: np.ndarray) -> float:
    """Max-norm of ``M - M.T``."""
    return float(np.max(np.abs(M - M.T), initial=0.0))


def check_symmetric(M: np.ndarray, name: str, tol: float = 1e-8) -> np.ndarray:
    M = check_square(M, name)
    scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
    if asymmetry(M) > tol * scale:
        raise ValidationError(f"{name} is not symmetric (asymmetry {asymmetry(M):.3g})")
    return M


def check_condition(M: np.ndarray, name: str, limit: float = 1e12) -> float:
    cond = float(np.linalg.cond(M)) if M.size else 1.0
    if not np.isfinite(cond) or cond > limit:
        raise NumericalError(f"{name} is numerically singular (condition {cond:.3g})")
    return cond
