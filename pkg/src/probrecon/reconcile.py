"""Projection-based reconciliation of Gaussian base forecasts.

Every method is a matrix ``G`` (n x m) with ``G S = I``, so that ``S G`` projects
onto the coherent subspace.  The reconciled predictive density of the bottom
level is ``N(G yhat, G W G')`` and that of the full hierarchy is its image
under ``S``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .covariance import CovarianceEstimate, is_positive_definite
from .hierarchy import SummingMatrix

METHODS = ("BU", "OLS", "WLS", "MinT")
PD_RTOL = 1e-12


class ReconciliationError(ValueError):
    pass


@dataclass(frozen=True)
class ReconciliationMethod:
    tag: Literal["BU", "OLS", "WLS", "MinT"]
    covariance_kind: str = "sample"

    def __post_init__(self):
        tag = normalize_method(self.tag)
        object.__setattr__(self, "tag", tag)

    @property
    def needs_covariance(self) -> bool:
        return self.tag in ("WLS", "MinT")


@dataclass(frozen=True)
class ReconciledGaussian:
    s: SummingMatrix
    bottom_mean: np.ndarray
    bottom_cov: np.ndarray
    full_mean: np.ndarray
    g: np.ndarray | None = None

    def full_cov(self) -> np.ndarray:
        """Rank-n covariance ``S G W G' S'`` of the full hierarchy."""
        return self.s.s @ self.bottom_cov @ self.s.s.T


@dataclass(frozen=True)
class JUDecomposition:
    j: np.ndarray
    u: np.ndarray
    c: np.ndarray
    m_star: int


def normalize_method(tag: str) -> str:
    lookup = {t.lower(): t for t in METHODS}
    try:
        return lookup[str(tag).lower()]
    except KeyError:
        raise ReconciliationError(f"unknown reconciliation method {tag!r}") from None


def _matrix(w) -> np.ndarray:
    if isinstance(w, CovarianceEstimate):
        return w.w
    return np.asarray(w, dtype=float)


def _pd_tol(w: np.ndarray) -> float:
    return PD_RTOL * float(np.trace(w)) / w.shape[0]


def _chol(w: np.ndarray):
    """Cholesky factor, rejecting matrices whose pivots fall below the PD tolerance."""
    if not is_positive_definite(w, _pd_tol(w)):
        raise ReconciliationError("covariance matrix is not positive definite")
    return cho_factor(w, lower=True)


def _gls(s: np.ndarray, w_inv_s: np.ndarray) -> np.ndarray:
    """``(S' A S)^{-1} S' A`` given ``A S``, with A symmetric."""
    return cho_solve(cho_factor(s.T @ w_inv_s, lower=True), w_inv_s.T)


def g_matrix(method, s: SummingMatrix, w=None) -> np.ndarray:
    tag = method.tag if isinstance(method, ReconciliationMethod) else normalize_method(method)
    n, m = s.n, s.m
    if tag == "BU":
        return np.hstack([np.zeros((n, m - n)), np.eye(n)])
    if tag == "OLS":
        return _gls(s.s, s.s)
    if w is None:
        raise ReconciliationError(f"{tag} requires a covariance estimate")
    w = _matrix(w)
    if w.shape != (m, m):
        raise ReconciliationError(f"covariance has shape {w.shape}, expected {(m, m)}")
    if tag == "WLS":
        lam = np.diag(w)
        if np.any(lam <= 0.0):
            raise ReconciliationError("WLS weights require positive variances")
        return _gls(s.s, s.s / lam[:, None])
    return mint_gstar(s, w)


def mint_gstar(s: SummingMatrix, w) -> np.ndarray:
    """Minimum-trace / log-score optimal ``(S' W^-1 S)^-1 S' W^-1``."""
    w = _matrix(w)
    return _gls(s.s, cho_solve(_chol(w), s.s))


def ju_decompose(s: SummingMatrix) -> JUDecomposition:
    """Constraint-free parameterization ``G = J + X U'`` of all G with ``G S = I``."""
    n, m = s.n, s.m
    if not np.array_equal(s.s[m - n:], np.eye(n)):
        raise ReconciliationError("S must end with the n x n identity block")
    c = s.s[: m - n]
    j = np.hstack([np.zeros((n, m - n)), np.eye(n)])
    u = np.vstack([np.eye(m - n), -c.T])
    return JUDecomposition(j=j, u=u, c=c, m_star=m - n)


def mint_gstar_ju(s: SummingMatrix, w) -> np.ndarray:
    """The same optimum written as ``J - J W U (U' W U)^-1 U'``."""
    w = _matrix(w)
    ju = ju_decompose(s)
    if ju.m_star == 0:
        return ju.j.copy()
    wu = w @ ju.u
    return ju.j - ju.j @ wu @ cho_solve(_chol(ju.u.T @ wu), ju.u.T)


def check_projection(s: SummingMatrix, g, tol: float = 1e-10) -> bool:
    g = np.asarray(g, dtype=float)
    if g.shape != (s.n, s.m):
        raise ReconciliationError(f"G has shape {g.shape}, expected {(s.n, s.m)}")
    gs = g @ s.s
    if np.max(np.abs(gs - np.eye(s.n))) >= tol:
        return False
    return bool(np.max(np.abs(s.s @ gs - s.s)) < tol)


def logdet_pd(a: np.ndarray) -> float:
    c, _ = cho_factor(a, lower=True)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def expected_logscore_objective(g, w, s: SummingMatrix) -> float:
    """Expected log score of the reconciled density when W is the true error covariance.

    Equals ``K + n/2 + logdet(G W G') / 2`` with
    ``K = n/2 log(2 pi) + logdet(S'S) / 2``.
    """
    g = np.asarray(g, dtype=float)
    w = _matrix(w)
    n = s.n
    z = g @ w @ g.T
    z = 0.5 * (z + z.T)
    try:
        logdet_z = logdet_pd(z)
    except np.linalg.LinAlgError:
        raise ReconciliationError("G W G' is not positive definite") from None
    k = 0.5 * n * np.log(2.0 * np.pi) + 0.5 * logdet_pd(s.s.T @ s.s)
    return k + 0.5 * n + 0.5 * logdet_z


def reconcile_gaussian(g, s: SummingMatrix, y_hat, w, tol: float = 1e-8) -> ReconciledGaussian:
    g = np.asarray(g, dtype=float)
    w = _matrix(w)
    y_hat = np.asarray(y_hat, dtype=float)
    if y_hat.shape != (s.m,):
        raise ReconciliationError(f"base forecast has shape {y_hat.shape}, expected ({s.m},)")
    if not check_projection(s, g, tol):
        raise ReconciliationError("S G is not a projection onto the coherent subspace")
    if not is_positive_definite(w, _pd_tol(w)):
        raise ReconciliationError("base covariance is not positive definite")
    bottom_mean = g @ y_hat
    bottom_cov = g @ w @ g.T
    bottom_cov = 0.5 * (bottom_cov + bottom_cov.T)
    if not is_positive_definite(bottom_cov, _pd_tol(bottom_cov)):
        raise ReconciliationError("reconciled covariance G W G' is not positive definite")
    return ReconciledGaussian(
        s=s, bottom_mean=bottom_mean, bottom_cov=bottom_cov,
        full_mean=s.s @ bottom_mean, g=g,
    )


def marginal_variances(r: ReconciledGaussian) -> np.ndarray:
    """Variance of every series: ``S_i' (G W G') S_i`` for each row ``S_i``."""
    return np.einsum("ij,jk,ik->i", r.s.s, r.bottom_cov, r.s.s)
