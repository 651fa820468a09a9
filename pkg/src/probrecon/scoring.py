"""Negatively oriented scoring rules: smaller is better throughout.

Closed forms are used where the predictive distribution is Gaussian; the
sample-based estimators take draws produced by :func:`sample_gaussian`, which
uses the counter-based Philox generator so that any (seed, stream) pair maps to
the same draws regardless of execution order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit
from scipy.linalg import cho_factor, solve_triangular
from scipy.special import erfc, ndtri

from .reconcile import ReconciledGaussian, logdet_pd

LOG_2PI = float(np.log(2.0 * np.pi))
SQRT_PI = float(np.sqrt(np.pi))
# above this sample size crps_empirical switches to the sorted O(N log N) form
EXACT_CRPS_MAX_N = 2000


class ScoringError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianDensity:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ScoringError(f"covariance shape {cov.shape} does not match mean of length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-10 * max(1.0, float(np.max(np.abs(cov))))):
            raise ScoringError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def from_reconciled(cls, r: ReconciledGaussian, full: bool = False) -> "GaussianDensity":
        if full:
            return cls(r.full_mean, r.full_cov())
        return cls(r.bottom_mean, r.bottom_cov)


@dataclass(frozen=True)
class SampleSet:
    draws: np.ndarray
    seed: int | tuple | None = None

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=float)
        if draws.ndim == 1:
            draws = draws[:, None]
        if draws.ndim != 2 or draws.shape[0] < 1:
            raise ScoringError("a sample set needs at least one draw")
        if not np.all(np.isfinite(draws)):
            raise ScoringError("draws contain non-finite values")
        object.__setattr__(self, "draws", draws)

    @property
    def n(self) -> int:
        return self.draws.shape[0]

    @property
    def dim(self) -> int:
        return self.draws.shape[1]


def _cholesky(cov: np.ndarray):
    try:
        return cho_factor(cov, lower=True)
    except np.linalg.LinAlgError:
        raise ScoringError("covariance is singular or not positive definite") from None


def norm_cdf(x):
    return 0.5 * erfc(-np.asarray(x, dtype=float) / np.sqrt(2.0))


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def logscore(d: GaussianDensity, z) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != d.mean.shape:
        raise ScoringError(f"observation has shape {z.shape}, density has dimension {d.dim}")
    cf = _cholesky(d.cov)
    resid = solve_triangular(cf[0], z - d.mean, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    return 0.5 * (d.dim * LOG_2PI + logdet + float(resid @ resid))


def logscore_normal(mean, sd, z):
    """Univariate Gaussian log score, vectorized over its arguments."""
    mean, sd, z = (np.asarray(a, dtype=float) for a in (mean, sd, z))
    if np.any(sd <= 0.0):
        raise ScoringError("standard deviation must be positive")
    w = (z - mean) / sd
    return 0.5 * LOG_2PI + np.log(sd) + 0.5 * w * w


def logscore_full_structure(r: ReconciledGaussian, z_full, tol: float = 1e-6) -> float:
    """Log score of the degenerate (rank n) density on the coherent subspace.

    Uses the pseudo-determinant convention, under which the full-structure
    score exceeds the bottom-level score by exactly ``logdet(S'S) / 2``.
    """
    s = r.s
    z_full = np.asarray(z_full, dtype=float)
    if z_full.shape != (s.m,):
        raise ScoringError(f"observation must have length {s.m}")
    gap = z_full[: s.m_star] - s.aggregation_block @ z_full[s.m_star:] if s.m_star else np.zeros(0)
    if gap.size and np.max(np.abs(gap)) > tol * max(1.0, float(np.max(np.abs(z_full)))):
        raise ScoringError("observation is not coherent with the hierarchy")
    bottom = z_full[s.m_star:]
    base = logscore(GaussianDensity(r.bottom_mean, r.bottom_cov), bottom)
    return base + 0.5 * logdet_pd(s.s.T @ s.s)


def crps_gaussian(mean, sd, z):
    mean, sd, z = (np.asarray(a, dtype=float) for a in (mean, sd, z))
    if np.any(sd <= 0.0):
        raise ScoringError("standard deviation must be positive")
    w = (z - mean) / sd
    out = sd * (w * (2.0 * norm_cdf(w) - 1.0) + 2.0 * norm_pdf(w) - 1.0 / SQRT_PI)
    return out[()] if out.ndim == 0 else out


def crps_empirical(samples, z: float) -> float:
    """Sample CRPS: mean |x_i - z| minus half the mean absolute pairwise gap (1/N^2 form)."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise ScoringError("no samples")
    first = float(np.mean(np.abs(x - z)))
    if n <= EXACT_CRPS_MAX_N:
        pair_sum = float(np.abs(x[:, None] - x[None, :]).sum())
    else:
        pair_sum = _pairwise_abs_sum_sorted(x)
    return first - pair_sum / (2.0 * n * n)


def _pairwise_abs_sum_sorted(x: np.ndarray) -> float:
    xs = np.sort(x)
    n = xs.size
    weights = 2.0 * np.arange(1, n + 1) - n - 1.0
    return 2.0 * float(weights @ xs)


def gaussian_interval(mean, sd, alpha: float):
    """Central (1 - alpha) interval of N(mean, sd^2)."""
    q = ndtri(1.0 - alpha / 2.0)
    mean, sd = np.asarray(mean, dtype=float), np.asarray(sd, dtype=float)
    return mean - q * sd, mean + q * sd


def interval_score(l, u, alpha: float, z):
    l, u, z = (np.asarray(a, dtype=float) for a in (l, u, z))
    if not 0.0 < alpha < 1.0:
        raise ScoringError("alpha must lie in (0, 1)")
    if np.any(l > u):
        raise ScoringError("lower bound exceeds upper bound")
    below = np.where(z < l, l - z, 0.0)
    above = np.where(z > u, z - u, 0.0)
    out = (u - l) + (2.0 / alpha) * (below + above)
    return out[()] if out.ndim == 0 else out


def _draws(samples) -> np.ndarray:
    return samples.draws if isinstance(samples, SampleSet) else SampleSet(samples).draws


def energy_score(samples, z) -> float:
    """Energy score with the consecutive-pair estimate of E||X - X'||."""
    x = _draws(samples)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if x.shape[0] < 2:
        raise ScoringError("energy score needs at least two draws")
    if z.shape != (x.shape[1],):
        raise ScoringError(f"observation has shape {z.shape}, draws have dimension {x.shape[1]}")
    first = float(np.mean(np.linalg.norm(x - z, axis=1)))
    second = float(np.sum(np.linalg.norm(np.diff(x, axis=0), axis=1)))
    return first - second / (2.0 * (x.shape[0] - 1))


@njit(cache=True)
def _mean_abs_pair_power(x, p):
    """Upper triangle of (1/N) sum_k |x_ki - x_kj|^p; zero elsewhere."""
    n, d = x.shape
    out = np.zeros((d, d))
    half = p == 0.5
    for k in range(n):
        for i in range(d):
            xi = x[k, i]
            for j in range(i + 1, d):
                a = abs(xi - x[k, j])
                out[i, j] += np.sqrt(a) if half else a ** p
    return out / n


def variogram_score(samples, z, p: float = 0.5, weights=None) -> float:
    x = _draws(samples)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    n, d = x.shape
    if z.shape != (d,):
        raise ScoringError(f"observation has shape {z.shape}, draws have dimension {d}")
    if p <= 0.0:
        raise ScoringError("order p must be positive")
    if weights is None:
        weights = np.ones((d, d))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (d, d):
        raise ScoringError(f"weights must be {d} x {d}")
    if np.any(weights < 0.0):
        raise ScoringError("weights must be non-negative")
    if d == 1:
        return 0.0

    expected = _mean_abs_pair_power(x, float(p))
    expected = expected + expected.T
    observed = np.abs(z[:, None] - z[None, :])
    observed = np.sqrt(observed) if p == 0.5 else observed ** p
    return float(np.sum(weights * (observed - expected) ** 2))


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, (list, tuple)):
        seed = np.random.SeedSequence([int(s) for s in seed])
    return np.random.Generator(np.random.Philox(seed))


def sample_gaussian(d: GaussianDensity, n: int, seed) -> SampleSet:
    """Draw ``mean + L xi`` with L the lower Cholesky factor of the covariance.

    ``seed`` is an int or a tuple of ints (e.g. ``(master, rep, stream)``).
    """
    if n < 1:
        raise ScoringError("need at least one draw")
    cf = _cholesky(d.cov)
    chol = np.tril(cf[0])
    xi = _generator(seed).standard_normal((n, d.dim))
    return SampleSet(d.mean + xi @ chol.T, seed=seed if isinstance(seed, int) else tuple(seed))


def univariate_scores(mean, sd, z, alphas: Sequence[float] = (0.2, 0.05)) -> dict[str, np.ndarray]:
    """LS, CRPS and interval scores for independent Gaussian marginals."""
    out = {"LS": logscore_normal(mean, sd, z), "CRPS": crps_gaussian(mean, sd, z)}
    for alpha in alphas:
        lo, hi = gaussian_interval(mean, sd, alpha)
        out[f"IS{round(100 * (1 - alpha))}"] = interval_score(lo, hi, alpha, z)
    return out
