"""One forecast origin, end to end: base models, covariances, reconciliation, scores.

Used by both the simulation harness (one origin per replication) and the
rolling-window evaluation (one origin per window).
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from . import scoring
from .covariance import CovarianceError, estimate
from .hierarchy import SummingMatrix, aggregate, coherence_discrepancy
from .models import ArmaFitError, base_forecast_all
from .reconcile import ReconciliationError, g_matrix, marginal_variances, reconcile_gaussian

log = logging.getLogger(__name__)

MULTIVARIATE = "multivariate"
KINDS = ("sample", "shrinkage")
ALL_METHODS = ("Base", "BU", "OLS", "WLS", "MinT")
SCORE_NAMES = ("LS", "ES", "VS", "CRPS", "IS80", "IS90", "IS95", "MSE")
DEFAULT_SCORES = ("LS", "ES", "VS", "CRPS", "IS80", "IS95", "MSE")
MULTIVARIATE_SCORES = ("LS", "ES", "VS")
UNIVARIATE_SCORES = ("LS", "CRPS", "IS80", "IS90", "IS95")
# random stream ids under the (seed, origin) key
_STREAM_RECONCILED = 1
_STREAM_BASE = 2


@dataclass(frozen=True)
class ScoreRecord:
    replication: int
    method: str
    covariance_kind: str
    score_name: str
    series_label: str
    value: float
    reason: str = ""

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class OriginResult:
    records: list[ScoreRecord]
    point_forecasts: dict[tuple[str, str], np.ndarray]
    realized: np.ndarray
    max_discrepancy: float


def normalize_kind(kind: str) -> str:
    if kind in ("shrink", "shrinkage"):
        return "shrinkage"
    if kind == "sample":
        return "sample"
    raise ValueError(f"unknown covariance kind {kind!r}")


def parse_method_pairs(methods: Iterable) -> list[tuple[str, str]]:
    """Accept ``("MinT", "shrinkage")`` pairs or ``"MinT-shrinkage"`` strings."""
    lookup = {m.lower(): m for m in ALL_METHODS}
    out = []
    for item in methods:
        if isinstance(item, str):
            name, _, kind = item.partition("-")
        else:
            name, kind = item
        tag = lookup.get(name.lower())
        if tag is None:
            raise ValueError(f"unknown method {name!r}")
        out.append((tag, normalize_kind(kind or "sample")))
    return out


def _alpha_of(score_name: str) -> float:
    return 1.0 - int(score_name[2:]) / 100.0


def score_origin(
    s: SummingMatrix,
    train_bottom,
    actual_bottom,
    methods: Sequence[tuple[str, str]],
    scores: Sequence[str] = DEFAULT_SCORES,
    origin: int = 0,
    seed: int = 0,
    n_draws: int = 10000,
    h: int = 1,
    max_p: int = 3,
    max_q: int = 3,
    difference: str = "none",
    univariate: bool = True,
) -> OriginResult:
    """Forecast ``h`` steps past ``train_bottom`` and score against ``actual_bottom``.

    Failures (fit errors, non-PD covariances) become records with a NaN value
    and a reason; they never raise.
    """
    scores = tuple(scores)
    unknown = set(scores) - set(SCORE_NAMES)
    if unknown:
        raise ValueError(f"unknown score names {sorted(unknown)}")
    actual_full = aggregate(s, actual_bottom)
    actual_bottom = np.asarray(actual_bottom, dtype=float)
    labels = s.row_labels
    records: list[ScoreRecord] = []
    points: dict[tuple[str, str], np.ndarray] = {}
    worst = 0.0

    def fail(method, kind, reason):
        for name in scores:
            records.append(ScoreRecord(origin, method, kind, name, "*", float("nan"), reason))

    try:
        base = base_forecast_all(aggregate(s, train_bottom), h=h, max_p=max_p, max_q=max_q,
                                 difference=difference, labels=labels)
    except ArmaFitError as exc:
        for method, kind in methods:
            fail(method, kind, f"base model: {exc}")
        return OriginResult(records, points, actual_full, worst)

    covs = {}
    for kind in sorted({k for _, k in methods}):
        try:
            covs[kind] = estimate(base.residuals, kind)
        except CovarianceError as exc:
            covs[kind] = exc

    y_hat = base.point
    for method, kind in methods:
        cov = covs[kind]
        if isinstance(cov, Exception):
            fail(method, kind, f"covariance: {cov}")
            continue
        w = cov.w
        try:
            if method == "Base":
                mean_full = y_hat
                var_full = np.diag(w).copy()
                density = scoring.GaussianDensity(y_hat, w)
                draws = scoring.sample_gaussian(density, n_draws, (seed, origin, _STREAM_BASE)).draws \
                    if {"ES", "VS"} & set(scores) else None
                mv_ls = None
            else:
                g = g_matrix(method, s, w)
                rec = reconcile_gaussian(g, s, y_hat, w)
                worst = max(worst, coherence_discrepancy(s, rec.full_mean))
                mean_full = rec.full_mean
                var_full = marginal_variances(rec)
                bottom = scoring.GaussianDensity(rec.bottom_mean, rec.bottom_cov)
                draws = None
                if {"ES", "VS"} & set(scores):
                    bdraws = scoring.sample_gaussian(bottom, n_draws, (seed, origin, _STREAM_RECONCILED)).draws
                    draws = bdraws @ s.s.T
                mv_ls = scoring.logscore(bottom, actual_bottom) if "LS" in scores else None
        except (ReconciliationError, scoring.ScoringError, np.linalg.LinAlgError) as exc:
            fail(method, kind, str(exc))
            continue
        points[(method, kind)] = mean_full

        def add(name, label, value):
            records.append(ScoreRecord(origin, method, kind, name, label, float(value)))

        # the log score of an incoherent base density is not comparable; never emitted
        if mv_ls is not None:
            add("LS", MULTIVARIATE, mv_ls)
        if "ES" in scores:
            add("ES", MULTIVARIATE, scoring.energy_score(draws, actual_full))
        if "VS" in scores:
            add("VS", MULTIVARIATE, scoring.variogram_score(draws, actual_full, p=0.5))
        sd = np.sqrt(var_full)
        if univariate:
            per_series = {}
            if "LS" in scores:
                per_series["LS"] = scoring.logscore_normal(mean_full, sd, actual_full)
            if "CRPS" in scores:
                per_series["CRPS"] = scoring.crps_gaussian(mean_full, sd, actual_full)
            for name in scores:
                if name.startswith("IS"):
                    alpha = _alpha_of(name)
                    lo, hi = scoring.gaussian_interval(mean_full, sd, alpha)
                    per_series[name] = scoring.interval_score(lo, hi, alpha, actual_full)
            for name, vals in per_series.items():
                for lab, v in zip(labels, np.atleast_1d(vals)):
                    add(name, lab, v)
        if "MSE" in scores:
            for lab, v in zip(labels, (mean_full - actual_full) ** 2):
                add("MSE", lab, v)
    return OriginResult(records, points, actual_full, worst)
