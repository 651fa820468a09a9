"""Monte Carlo designs with VAR(1) bottom-level processes.

Setup 1: four bottom series in two pairs, block-diagonal VAR(1) whose blocks
have complex eigenvalues 0.6 e^{+-i pi/3} and 0.9 e^{+-i pi/6}, innovation
covariance blockdiag(Sigma_1, Sigma_1) with Sigma_1 = [[2, sqrt(6) rho],
[sqrt(6) rho, 3]].

Setup 2: 36 bottom series in six groups of six (43 series in total).  The
coefficient matrix and between-group correlations are seeded substitutes:
random stable 6 x 6 blocks and a constant between-block correlation.

Every replication draws from its own Philox stream keyed by
``(seed, rep)``, so results do not depend on the order replications run in.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Literal, Sequence

import numpy as np
import pandas as pd

from .hierarchy import HierarchySpec, SummingMatrix, build_summing_matrix
from .pipeline import (
    DEFAULT_SCORES,
    MULTIVARIATE,
    ScoreRecord,
    parse_method_pairs,
    score_origin,
)

log = logging.getLogger(__name__)

BURN_IN = 200
RHO_GRID = tuple(round(0.1 * k, 1) for k in range(-8, 9))
T_GRID = (101, 301, 501)
BASELINE = ("BU", "sample")
_STREAM_DGP = 0
_SETUP2_COEF, _SETUP2_COV, _SETUP2_SIGNS = 10, 11, 12


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Setup1Config:
    rho: float = 0.5
    t_len: int = 501
    reps: int = 200
    seed: int = 0

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if self.t_len < 25:
            raise ValueError("t_len too short")

    @property
    def off_grid(self) -> bool:
        return round(self.rho, 1) not in RHO_GRID or abs(self.rho - round(self.rho, 1)) > 1e-12

    @property
    def hierarchy(self) -> SummingMatrix:
        return setup1_hierarchy()


@dataclass(frozen=True)
class Setup2Config:
    correlation_mode: Literal["nonnegative", "mixed"] = "nonnegative"
    t_len: int = 501
    reps: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.correlation_mode not in ("nonnegative", "mixed"):
            raise ValueError(f"unknown correlation mode {self.correlation_mode!r}")
        if self.t_len < 25:
            raise ValueError("t_len too short")

    @property
    def hierarchy(self) -> SummingMatrix:
        return setup2_hierarchy()


@lru_cache(maxsize=None)
def setup1_hierarchy() -> SummingMatrix:
    return build_summing_matrix(HierarchySpec(("AA", "AB", "BA", "BB"), (0, 1)))


@lru_cache(maxsize=None)
def setup2_hierarchy() -> SummingMatrix:
    labels = tuple(f"{g}{k}" for g in "ABCDEF" for k in range(1, 7))
    return build_summing_matrix(HierarchySpec(labels, (0, 1)))


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def rotation_block(radius: float, angle: float) -> np.ndarray:
    """Real 2 x 2 matrix with eigenvalues ``radius * exp(+-i angle)``."""
    c, s = radius * np.cos(angle), radius * np.sin(angle)
    return np.array([[c, -s], [s, c]])


def var1_coefficients_setup1() -> tuple[np.ndarray, np.ndarray]:
    return rotation_block(0.6, np.pi / 3), rotation_block(0.9, np.pi / 6)


def setup1_innovation_cov(rho: float) -> np.ndarray:
    sigma1 = np.array([[2.0, np.sqrt(6.0) * rho], [np.sqrt(6.0) * rho, 3.0]])
    out = np.zeros((4, 4))
    out[:2, :2] = sigma1
    out[2:, 2:] = sigma1
    return out


def setup1_coefficients() -> np.ndarray:
    a1, a2 = var1_coefficients_setup1()
    a = np.zeros((4, 4))
    a[:2, :2] = a1
    a[2:, 2:] = a2
    return a


def simulate_var1(a: np.ndarray, cov: np.ndarray, t_len: int, rng: np.random.Generator,
                  burn_in: int = BURN_IN) -> np.ndarray:
    chol = np.linalg.cholesky(cov)
    k = a.shape[0]
    shocks = rng.standard_normal((t_len + burn_in, k)) @ chol.T
    out = np.empty((t_len + burn_in, k))
    prev = np.zeros(k)
    for t in range(t_len + burn_in):
        prev = a @ prev + shocks[t]
        out[t] = prev
    return out[burn_in:]


def dgp_setup1(cfg: Setup1Config, rep: int) -> np.ndarray:
    """``t_len x 4`` bottom panel; the final row is the withheld test point."""
    return simulate_var1(setup1_coefficients(), setup1_innovation_cov(cfg.rho), cfg.t_len,
                         _rng(cfg.seed, rep, _STREAM_DGP))


def _block_slices(n_blocks=6, size=6):
    return [slice(b * size, (b + 1) * size) for b in range(n_blocks)]


def repair_pd(cov: np.ndarray, floor: float = 1e-6, max_iter: int = 10) -> np.ndarray:
    """Clip eigenvalues at ``floor`` and restore the diagonal until Cholesky succeeds."""
    target = np.diag(cov).copy()
    c = cov.copy()
    for _ in range(max_iter):
        try:
            np.linalg.cholesky(c)
            return c
        except np.linalg.LinAlgError:
            pass
        vals, vecs = np.linalg.eigh(c)
        c = (vecs * np.maximum(vals, floor)) @ vecs.T
        scale = np.sqrt(target / np.diag(c))
        c = c * np.outer(scale, scale)
        c = 0.5 * (c + c.T)
    try:
        np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        raise SimulationError("covariance repair failed to produce a PD matrix") from None
    return c


@lru_cache(maxsize=32)
def setup2_parameters(seed: int, mode: str) -> tuple[np.ndarray, np.ndarray]:
    """VAR(1) coefficient matrix and innovation covariance for Setup 2, fixed by seed.

    Both correlation modes share the coefficient matrix, the block
    correlations and the standard deviations; ``mixed`` additionally flips the
    sign of a random half of the between-block covariance blocks.
    """
    blocks = _block_slices()
    rng_coef = _rng(seed, _SETUP2_COEF)
    a = np.zeros((36, 36))
    for sl in blocks:
        raw = rng_coef.standard_normal((6, 6))
        radius = rng_coef.uniform(0.4, 0.9)
        a[sl, sl] = raw * (radius / np.max(np.abs(np.linalg.eigvals(raw))))

    rng_cov = _rng(seed, _SETUP2_COV)
    rho_within = rng_cov.uniform(0.2, 0.7, size=6)
    rho_between = rng_cov.uniform(0.0, rho_within.min() / 2.0)
    corr = np.full((36, 36), rho_between)
    for sl, r in zip(blocks, rho_within):
        corr[sl, sl] = r
    np.fill_diagonal(corr, 1.0)
    sd = rng_cov.uniform(np.sqrt(2.0), np.sqrt(6.0), size=36)
    cov = corr * np.outer(sd, sd)

    if mode == "mixed":
        pairs = [(i, j) for i in range(6) for j in range(i + 1, 6)]
        flip = _rng(seed, _SETUP2_SIGNS).choice(len(pairs), size=len(pairs) // 2, replace=False)
        for idx in sorted(flip):
            i, j = pairs[idx]
            cov[blocks[i], blocks[j]] *= -1.0
            cov[blocks[j], blocks[i]] *= -1.0
        cov = repair_pd(cov)
    np.linalg.cholesky(cov)
    return a, cov


def dgp_setup2(cfg: Setup2Config, rep: int) -> np.ndarray:
    a, cov = setup2_parameters(cfg.seed, cfg.correlation_mode)
    return simulate_var1(a, cov, cfg.t_len, _rng(cfg.seed, rep, _STREAM_DGP))


def _panel(setup, rep: int) -> np.ndarray:
    if isinstance(setup, Setup1Config):
        return dgp_setup1(setup, rep)
    if isinstance(setup, Setup2Config):
        return dgp_setup2(setup, rep)
    raise TypeError(f"unsupported setup {type(setup).__name__}")


def run_one(setup, rep: int, methods, scores, n_draws: int, max_p: int, max_q: int,
            univariate: bool = True) -> list[ScoreRecord]:
    panel = _panel(setup, rep)
    result = score_origin(
        setup.hierarchy, panel[:-1], panel[-1], methods, scores,
        origin=rep, seed=setup.seed, n_draws=n_draws, max_p=max_p, max_q=max_q,
        univariate=univariate,
    )
    if result.max_discrepancy > 1e-8:
        log.warning("rep %d: reconciled forecasts incoherent (%.3g)", rep, result.max_discrepancy)
    return result.records


def _worker_count(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("RECON_THREADS", "1") or 1)
    return max(1, workers)


def _run_one_packed(args):
    return run_one(*args)


def run_replications(
    setup,
    methods: Iterable = (("BU", "sample"), ("OLS", "sample"), ("WLS", "sample"), ("MinT", "sample")),
    scores: Sequence[str] = DEFAULT_SCORES,
    n_draws: int = 10000,
    max_p: int = 3,
    max_q: int = 3,
    workers: int | None = None,
    univariate: bool = True,
) -> list[ScoreRecord]:
    """Simulate, forecast, reconcile and score ``setup.reps`` replications.

    Output order is (replication, method list order, score) regardless of how
    many worker processes are used.
    """
    methods = parse_method_pairs(methods)
    jobs = [(setup, rep, methods, tuple(scores), n_draws, max_p, max_q, univariate)
            for rep in range(setup.reps)]
    n_workers = _worker_count(workers)
    if n_workers == 1:
        chunks = [_run_one_packed(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            chunks = list(pool.map(_run_one_packed, jobs, chunksize=4))
    return [rec for chunk in chunks for rec in chunk]


def records_frame(records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records
    return pd.DataFrame([r.as_dict() for r in records], columns=ScoreRecord.columns())


def relative_improvement(records, baseline: tuple[str, str] = BASELINE,
                         series_label: str | None = MULTIVARIATE) -> pd.DataFrame:
    """Percentage change of each method's mean score relative to the baseline.

    ``100 * (mean_method - mean_baseline) / |mean_baseline|``; negative values
    mean the method beats the baseline.  Replications where either side failed
    are dropped pairwise.  Multivariate LS rows for ``Base`` are never shown.
    """
    df = records_frame(records)
    if series_label is not None:
        df = df[df["series_label"] == series_label]
    df = df[df["value"].notna()]
    base = df[(df["method"] == baseline[0]) & (df["covariance_kind"] == baseline[1])]
    if base.empty:
        raise SimulationError(f"no records for baseline {baseline}")
    key = ["score_name", "series_label", "replication"]
    base_vals = base.set_index(key)["value"].rename("baseline")
    joined = df.join(base_vals, on=key, how="inner")
    rows = []
    for (method, kind, score, label), grp in joined.groupby(
            ["method", "covariance_kind", "score_name", "series_label"], sort=False):
        if method == "Base" and score == "LS" and label == MULTIVARIATE:
            continue
        mean_m = grp["value"].mean()
        mean_b = grp["baseline"].mean()
        if mean_b == 0.0:
            raise SimulationError(f"baseline mean for {score}/{label} is zero")
        rows.append({
            "method": method, "covariance_kind": kind, "score_name": score,
            "series_label": label, "mean": mean_m, "baseline_mean": mean_b,
            "n": len(grp), "rel_improvement": 100.0 * (mean_m - mean_b) / abs(mean_b),
        })
    out = pd.DataFrame(rows, columns=["method", "covariance_kind", "score_name", "series_label",
                                      "mean", "baseline_mean", "n", "rel_improvement"])
    return out.sort_values(["series_label", "score_name", "covariance_kind", "method"],
                           kind="mergesort").reset_index(drop=True)


METHOD_ORDER = ("BU", "OLS", "WLS", "MinT", "Base")


def table_layout(rel: pd.DataFrame, scores: Sequence[str] = ("LS", "ES", "VS")) -> pd.DataFrame:
    """Rows = methods, columns = (covariance kind, score), multivariate scores only."""
    sub = rel[(rel["series_label"] == MULTIVARIATE) & rel["score_name"].isin(scores)]
    wide = sub.pivot_table(index="method", columns=["covariance_kind", "score_name"],
                           values="rel_improvement", aggfunc="first")
    kinds = [k for k in ("sample", "shrinkage") if k in wide.columns.get_level_values(0)]
    cols = [(k, sname) for k in kinds for sname in scores if (k, sname) in wide.columns]
    rows = [m for m in METHOD_ORDER if m in wide.index]
    return wide.reindex(index=rows, columns=pd.MultiIndex.from_tuples(cols))
