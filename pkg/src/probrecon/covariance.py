"""Covariance estimators for one-step base forecast errors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

Kind = Literal["sample", "shrinkage", "diagonal"]


class CovarianceError(ValueError):
    pass


@dataclass(frozen=True)
class CovarianceEstimate:
    w: np.ndarray
    kind: Kind
    n_rows_used: int
    shrink_lambda: float | None = None

    @property
    def dim(self) -> int:
        return self.w.shape[0]


def _as_residuals(residuals, min_rows: int) -> np.ndarray:
    e = np.asarray(residuals, dtype=float)
    if e.ndim == 1:
        e = e[:, None]
    if e.ndim != 2 or e.shape[1] < 1:
        raise CovarianceError("residuals must be a T x m matrix")
    if e.shape[0] < min_rows:
        raise CovarianceError(f"need at least {min_rows} residual rows, got {e.shape[0]}")
    if not np.all(np.isfinite(e)):
        raise CovarianceError("residuals contain non-finite values")
    return e


def sample_cov(residuals) -> CovarianceEstimate:
    """Sample covariance with divisor T of the column-demeaned residuals."""
    e = _as_residuals(residuals, 2)
    ec = e - e.mean(axis=0)
    w = ec.T @ ec / e.shape[0]
    w = 0.5 * (w + w.T)
    return CovarianceEstimate(w=w, kind="sample", n_rows_used=e.shape[0])


def shrinkage_intensity(residuals) -> float:
    """Optimal weight on the diagonal target (correlations shrunk to zero).

    lambda = sum_{i != j} Var(r_ij) / sum_{i != j} r_ij^2, clipped to [0, 1],
    where Var(r_ij) is estimated from the per-observation products of the
    standardized residuals.
    """
    e = _as_residuals(residuals, 3)
    t, m = e.shape
    if m == 1:
        return 0.0
    ec = e - e.mean(axis=0)
    sd = np.sqrt((ec * ec).mean(axis=0))
    if np.any(sd == 0.0):
        raise CovarianceError("residual column with zero variance")
    xs = ec / sd
    prod_mean = xs.T @ xs
    # xs is standardized with divisor T, hence 1 / (T (T - 1)) rather than T / (T - 1)^3
    var_r = ((xs * xs).T @ (xs * xs) - prod_mean * prod_mean / t) / (t * (t - 1.0))
    corr = prod_mean / t
    off = ~np.eye(m, dtype=bool)
    denom = float(np.sum(corr[off] ** 2))
    if denom == 0.0:
        return 1.0
    lam = float(np.sum(var_r[off])) / denom
    return min(1.0, max(0.0, lam))


def shrink_cov(residuals) -> CovarianceEstimate:
    e = _as_residuals(residuals, 3)
    base = sample_cov(e)
    if np.any(np.diag(base.w) <= 0.0):
        bad = np.flatnonzero(np.diag(base.w) <= 0.0).tolist()
        raise CovarianceError(f"zero-variance residual columns: {bad}")
    lam = shrinkage_intensity(e)
    target = np.diag(np.diag(base.w))
    w = lam * target + (1.0 - lam) * base.w
    np.fill_diagonal(w, np.diag(base.w))
    return CovarianceEstimate(w=w, kind="shrinkage", n_rows_used=e.shape[0], shrink_lambda=lam)


def diag_cov(w) -> CovarianceEstimate:
    """Keep only the variances.  Accepts a CovarianceEstimate or a bare matrix."""
    if isinstance(w, CovarianceEstimate):
        mat, rows = w.w, w.n_rows_used
    else:
        mat, rows = np.asarray(w, dtype=float), 0
    return CovarianceEstimate(w=np.diag(np.diag(mat)), kind="diagonal", n_rows_used=rows)


def is_positive_definite(w, tol: float = 0.0) -> bool:
    """Cholesky-based PD test: every pivot ``L_ii**2`` must exceed ``tol``."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise CovarianceError(f"expected a square matrix, got shape {w.shape}")
    try:
        chol = np.linalg.cholesky(w)
    except np.linalg.LinAlgError:
        return False
    return bool(np.all(np.diag(chol) ** 2 > tol))


def estimate(residuals, kind: str) -> CovarianceEstimate:
    if kind == "sample":
        return sample_cov(residuals)
    if kind in ("shrink", "shrinkage"):
        return shrink_cov(residuals)
    raise CovarianceError(f"unknown covariance kind {kind!r}")
