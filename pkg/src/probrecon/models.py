"""Univariate ARMA base models fitted by conditional sum of squares.

Orders are chosen by AICc over a ``[0, max_p] x [0, max_q]`` grid.  Every
candidate is estimated with a damped Gauss-Newton iteration on the CSS
objective; the residual recursion and its derivatives run in compiled
kernels.

Sign conventions::

    (1 - phi_1 B - ... - phi_p B^p)(y_t - mu) = (1 + theta_1 B + ... + theta_q B^q) e_t
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_toeplitz
from numba import njit

MIN_LENGTH = 20
MAX_ORDER = 5
STATIONARITY_TOL = 1e-6
# candidates with any AR or MA root of modulus below this are discarded
ROOT_MARGIN = 1.01
MAX_ITER = 200
GRAD_TOL = 1e-8


class ArmaFitError(ValueError):
    pass


@dataclass(frozen=True)
class ArmaModel:
    p: int
    q: int
    include_mean: bool
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    mean: float
    sigma2: float
    aicc: float
    n_obs: int
    n_cond: int = 0

    @property
    def burn_in(self) -> int:
        return max(self.p, self.q)

    @property
    def order(self) -> tuple[int, int]:
        return self.p, self.q


@dataclass
class BaseForecastSet:
    """Base forecasts for all series plus in-sample 1-step errors.

    ``point`` is the h-step-ahead forecast vector; ``paths`` holds forecasts
    for steps 1..h (rows).  ``residuals`` has burn-in rows removed jointly.
    """

    point: np.ndarray
    residuals: np.ndarray
    h: int
    paths: np.ndarray | None = None
    models: list[ArmaModel] = field(default_factory=list)
    labels: tuple[str, ...] = ()


def _max_root_modulus(poly_tail: np.ndarray, sign: float) -> float:
    """Largest modulus among the roots of ``z^k + sign * (c_1 z^{k-1} + ... + c_k)``.

    All moduli < 1 means the lag polynomial ``1 + sign * sum c_i B^i`` has its
    roots outside the unit circle.
    """
    if poly_tail.size == 0:
        return 0.0
    if poly_tail.size == 1:
        return abs(float(poly_tail[0]))
    return float(np.max(np.abs(np.roots(np.r_[1.0, sign * poly_tail]))))


@njit(cache=True)
def _stable_stepdown(coefs, radius):
    """True when all roots of ``1 - sum c_i B^i`` lie outside ``|B| = 1/radius``.

    Step-down (Schur-Cohn) recursion through the partial autocorrelations.
    """
    k = coefs.size
    a = np.empty(k)
    for i in range(k):
        a[i] = coefs[i] * radius ** (i + 1)
    while k > 0:
        kappa = a[k - 1]
        if not (-1.0 < kappa < 1.0):
            return False
        denom = 1.0 - kappa * kappa
        b = np.empty(k - 1)
        for j in range(k - 1):
            b[j] = (a[j] + kappa * a[k - 2 - j]) / denom
        a = b
        k -= 1
    return True


def is_stationary(ar_coeffs, tol: float = STATIONARITY_TOL) -> bool:
    return _max_root_modulus(np.asarray(ar_coeffs, dtype=float), -1.0) < 1.0 - tol


def is_invertible(ma_coeffs, tol: float = 0.0) -> bool:
    return _max_root_modulus(np.asarray(ma_coeffs, dtype=float), 1.0) < 1.0 - tol


@njit(cache=True)
def _residuals_kernel(y, mu, phi, theta):
    p, q, n = phi.size, theta.size, y.size
    x = y - mu
    e = np.zeros(n)
    for t in range(n):
        acc = x[t]
        for i in range(min(p, t)):
            acc -= phi[i] * x[t - 1 - i]
        for j in range(min(q, t)):
            acc -= theta[j] * e[t - 1 - j]
        e[t] = acc
    return e


@njit(cache=True)
def _jacobian_kernel(y, mu, phi, theta, e, include_mean):
    """Derivatives of the CSS residuals w.r.t. (mu, phi, theta), zero start-up."""
    p, q, n = phi.size, theta.size, y.size
    off = 1 if include_mean else 0
    k = off + p + q
    jac = np.zeros((n, k))
    x = y - mu
    for t in range(n):
        if include_mean:
            v = -1.0
            for i in range(min(p, t)):
                v += phi[i]
            jac[t, 0] = v
        for i in range(p):
            jac[t, off + i] = -x[t - 1 - i] if t - 1 - i >= 0 else 0.0
        for j in range(q):
            jac[t, off + p + j] = -e[t - 1 - j] if t - 1 - j >= 0 else 0.0
        for j in range(min(q, t)):
            for c in range(k):
                jac[t, c] -= theta[j] * jac[t - 1 - j, c]
    return jac


def _residuals(y, mu, phi, theta):
    return _residuals_kernel(np.asarray(y, dtype=float), float(mu),
                             np.asarray(phi, dtype=float), np.asarray(theta, dtype=float))


def _yule_walker(x, p):
    if p == 0:
        return np.zeros(0)
    xc = x - x.mean()
    n = xc.size
    acov = np.array([xc[: n - k] @ xc[k:] for k in range(p + 1)]) / n
    if acov[0] <= 0:
        return np.zeros(p)
    phi = solve_toeplitz(acov[:p], acov[1:])
    if not _stable_stepdown(phi, 1.001):
        return np.zeros(p)
    return phi


def _unpack(params, p, q, include_mean, mu_fixed=0.0):
    off = 1 if include_mean else 0
    mu = params[0] if include_mean else mu_fixed
    return mu, params[off: off + p], params[off + p: off + p + q]


# stop once an accepted step improves the objective by less than this (relative)
FTOL = 1e-8
# MA roots kept at modulus >= 1/(1 - MA_GUARD) during iteration
MA_GUARD = 1e-4


@njit(cache=True)
def _gauss_newton(y, params, p, q, n_cond, include_mean, max_iter, gtol, ftol, ma_radius):
    off = 1 if include_mean else 0
    k = params.size
    mu = params[0] if include_mean else 0.0
    e = _residuals_kernel(y, mu, params[off:off + p], params[off + p:])
    r = e[n_cond:]
    sse = np.dot(r, r)
    if k == 0:
        return params, sse
    for _ in range(max_iter):
        phi = params[off:off + p]
        theta = params[off + p:]
        jac = _jacobian_kernel(y, mu, phi, theta, e, include_mean)[n_cond:]
        grad = jac.T @ r
        jtj = jac.T @ jac
        converged = sse == 0.0
        if not converged:
            converged = True
            for c in range(k):
                scale = np.sqrt(jtj[c, c] * sse)
                if scale == 0.0:
                    scale = 1.0
                if abs(grad[c]) > gtol * scale:
                    converged = False
                    break
        if converged:
            break
        for c in range(k):
            jtj[c, c] *= 1.0 + 1e-12
        step = np.linalg.solve(jtj, -grad)
        t = 1.0
        accepted = False
        while t > 1e-10:
            cand = params + t * step
            c_mu = cand[0] if include_mean else 0.0
            c_phi = cand[off:off + p]
            c_theta = cand[off + p:]
            if _stable_stepdown(c_phi, 1.0) and _stable_stepdown(-c_theta, ma_radius):
                c_e = _residuals_kernel(y, c_mu, c_phi, c_theta)
                c_r = c_e[n_cond:]
                c_sse = np.dot(c_r, c_r)
                if c_sse < sse:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        rel = (sse - c_sse) / sse
        params, mu, e, r, sse = cand, c_mu, c_e, c_r, c_sse
        if rel < ftol:
            break
    return params, sse


def _css_fit(y, p, q, n_cond, include_mean):
    """Minimise the CSS objective for one (p, q); returns (params, sse)."""
    mu0 = float(y.mean()) if include_mean else 0.0
    params = np.concatenate(([mu0] if include_mean else [], _yule_walker(y, p), np.zeros(q)))
    try:
        return _gauss_newton(y, params, p, q, n_cond, include_mean,
                             MAX_ITER, GRAD_TOL, FTOL, 1.0 / (1.0 - MA_GUARD))
    except np.linalg.LinAlgError:
        return params, np.inf


def _check_series(series) -> np.ndarray:
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ArmaFitError("series must be one-dimensional")
    if y.size < MIN_LENGTH:
        raise ArmaFitError(f"series has {y.size} observations, need at least {MIN_LENGTH}")
    if not np.all(np.isfinite(y)):
        raise ArmaFitError("series contains non-finite values")
    if np.ptp(y) == 0.0:
        raise ArmaFitError("series is constant (degenerate variance)")
    return y


def aicc(loglik: float, k: int, n: int) -> float:
    if n - k - 1 <= 0:
        return np.inf
    return -2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1) / (n - k - 1)


def arma_candidates(series, max_p: int = 3, max_q: int = 3,
                    include_mean: bool = True) -> dict[tuple[int, int], ArmaModel | None]:
    """Fit every (p, q) on the grid; ``None`` marks discarded candidates.

    All candidates are scored on the same conditioning window (the first
    ``max(max_p, max_q)`` observations are conditioned on), so their
    likelihoods are comparable.
    """
    y = _check_series(series)
    if not (0 <= max_p <= MAX_ORDER and 0 <= max_q <= MAX_ORDER):
        raise ArmaFitError(f"orders must lie in [0, {MAX_ORDER}]")
    n_cond = max(max_p, max_q)
    n_eff = y.size - n_cond
    margin = 1.0 - 1.0 / ROOT_MARGIN
    out: dict[tuple[int, int], ArmaModel | None] = {}
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            out[(p, q)] = None
            params, sse = _css_fit(y, p, q, n_cond, include_mean)
            mu, phi, theta = _unpack(params, p, q, include_mean, 0.0)
            if not np.isfinite(sse) or sse <= 0.0:
                continue
            if not is_stationary(phi, margin) or not is_invertible(theta, margin):
                continue
            sigma2 = sse / n_eff
            loglik = -0.5 * n_eff * (np.log(2.0 * np.pi * sigma2) + 1.0)
            k = p + q + int(include_mean) + 1
            out[(p, q)] = ArmaModel(
                p=p, q=q, include_mean=include_mean,
                ar_coeffs=np.array(phi), ma_coeffs=np.array(theta),
                mean=float(mu), sigma2=float(sigma2), aicc=float(aicc(loglik, k, n_eff)),
                n_obs=y.size, n_cond=n_cond,
            )
    return out


def fit_arma(series, max_p: int = 3, max_q: int = 3, include_mean: bool = True) -> ArmaModel:
    """Select and fit an ARMA(p, q) model by minimum AICc over the order grid."""
    best = None
    for model in arma_candidates(series, max_p, max_q, include_mean).values():
        if model is not None and np.isfinite(model.aicc) and (best is None or model.aicc < best.aicc):
            best = model
    if best is None:
        raise ArmaFitError("no stationary ARMA candidate could be fitted")
    return best


def insample_residuals(model: ArmaModel, series) -> np.ndarray:
    """One-step in-sample errors ``y_t - yhat_{t|t-1}`` with zero pre-sample values.

    The first ``model.burn_in`` entries are affected by the zero start-up and
    should not be used for covariance estimation.
    """
    y = np.asarray(series, dtype=float)
    if y.size != model.n_obs:
        raise ArmaFitError(f"model was fitted on {model.n_obs} observations, got {y.size}")
    return _residuals(y, model.mean, model.ar_coeffs, model.ma_coeffs)


def forecast(model: ArmaModel, series, h: int) -> np.ndarray:
    if h < 1:
        raise ArmaFitError("forecast horizon must be at least 1")
    y = np.asarray(series, dtype=float)
    e = _residuals(y, model.mean, model.ar_coeffs, model.ma_coeffs)
    p, q = model.p, model.q
    x = list(y - model.mean)
    errs = list(e)
    out = np.empty(h)
    for k in range(h):
        val = sum(model.ar_coeffs[i] * x[-1 - i] for i in range(p) if len(x) > i)
        val += sum(model.ma_coeffs[j] * errs[-1 - j] for j in range(q) if len(errs) > j)
        x.append(val)
        errs.append(0.0)
        out[k] = val + model.mean
    return out


def parse_difference(mode: str) -> int:
    """Return the differencing lag for ``none``, ``first`` or ``seasonal:<lag>``."""
    if mode in (None, "", "none"):
        return 0
    if mode == "first":
        return 1
    if mode.startswith("seasonal:"):
        lag = int(mode.split(":", 1)[1])
        if lag < 1:
            raise ValueError(f"invalid seasonal lag in {mode!r}")
        return lag
    raise ValueError(f"unknown differencing mode {mode!r}")


def _undifference(y, fc_diff, lag):
    hist = list(y)
    for d in fc_diff:
        hist.append(hist[-lag] + d)
    return np.array(hist[len(y):])


def base_forecast_all(
    panel,
    h: int = 1,
    max_p: int = 3,
    max_q: int = 3,
    difference: str = "none",
    labels: Sequence[str] | None = None,
) -> BaseForecastSet:
    """Fit every column of a ``T x m`` panel independently and forecast ``h`` steps.

    With differencing, models are fitted to ``y_t - y_{t-lag}``; the 1-step
    errors of the differenced model coincide with those of the level series.
    """
    panel = np.asarray(panel, dtype=float)
    if panel.ndim == 1:
        panel = panel[:, None]
    n_cols = panel.shape[1]
    if labels is None:
        labels = [f"col{j}" for j in range(n_cols)]
    lag = parse_difference(difference)
    paths = np.empty((h, n_cols))
    resid_cols = []
    models = []
    for j in range(n_cols):
        y = panel[:, j]
        z = y[lag:] - y[:-lag] if lag else y
        try:
            model = fit_arma(z, max_p, max_q)
        except ArmaFitError as exc:
            raise ArmaFitError(f"column {labels[j]!r}: {exc}") from exc
        fc = forecast(model, z, h)
        paths[:, j] = _undifference(y, fc, lag) if lag else fc
        resid_cols.append(insample_residuals(model, z))
        models.append(model)
    burn = max(mod.burn_in for mod in models)
    residuals = np.column_stack(resid_cols)[burn:]
    return BaseForecastSet(
        point=paths[-1].copy(), residuals=residuals, h=h, paths=paths,
        models=models, labels=tuple(labels),
    )
