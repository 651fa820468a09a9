"""Rolling-origin evaluation on panel data, MSE tables and report files."""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
import pandas as pd

from .hierarchy import HierarchySpec, SummingMatrix, build_summing_matrix, read_hierarchy
from .pipeline import MULTIVARIATE, ScoreRecord, parse_method_pairs, score_origin
from .simulation import relative_improvement, records_frame, table_layout

log = logging.getLogger(__name__)

EVAL_SCORES = ("LS", "ES", "VS", "CRPS", "IS80", "IS90", "IS95", "MSE")
UNIVARIATE_FILES = ("LS", "CRPS", "IS80", "IS90", "IS95")
# point forecasts of these methods do not depend on which covariance estimator is used
KIND_FREE_POINTS = ("Base", "BU", "OLS", "WLS")
FLOAT_FORMAT = "%.17g"


class PanelError(ValueError):
    pass


@dataclass(frozen=True)
class PanelData:
    dates: tuple[str, ...]
    values: np.ndarray
    spec: HierarchySpec

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.dates), len(self.spec.bottom_labels)):
            raise PanelError(f"values have shape {values.shape}, expected "
                             f"({len(self.dates)}, {len(self.spec.bottom_labels)})")
        if not np.all(np.isfinite(values)):
            raise PanelError("panel contains missing or non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))

    @property
    def t_len(self) -> int:
        return self.values.shape[0]

    @property
    def summing(self) -> SummingMatrix:
        return build_summing_matrix(self.spec)

    def full(self) -> np.ndarray:
        """All m series, aggregated from the bottom level."""
        return self.values @ self.summing.s.T


@dataclass
class WindowResult:
    window: int
    window_end: str
    point_forecasts: dict[tuple[str, str], np.ndarray]
    realized: np.ndarray
    max_discrepancy: float
    records: list[ScoreRecord] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(np.isnan(r.value) for r in self.records)


def load_panel(csv_path, hierarchy) -> PanelData:
    """Read a wide CSV (first column dates, one column per bottom label)."""
    spec = hierarchy if isinstance(hierarchy, HierarchySpec) else read_hierarchy(hierarchy)
    df = pd.read_csv(csv_path, dtype=str, keep_default_na=False)
    if df.shape[1] < 2:
        raise PanelError("panel CSV needs a date column and at least one series column")
    dates = df.iloc[:, 0]
    if dates.duplicated().any():
        dup = dates[dates.duplicated()].iloc[0]
        raise PanelError(f"duplicate date {dup!r}")
    missing = [lab for lab in spec.bottom_labels if lab not in df.columns]
    if missing:
        raise PanelError(f"missing columns for labels: {missing}")
    block = df[list(spec.bottom_labels)]
    values = block.apply(pd.to_numeric, errors="coerce")
    if values.isna().to_numpy().any():
        col = values.columns[values.isna().any()][0]
        row = int(np.flatnonzero(values[col].isna())[0])
        raw = block[col].iloc[row]
        kind = "missing" if not raw.strip() else "non-numeric"
        raise PanelError(f"{kind} value {raw!r} in column {col!r}, row {row + 1}")
    return PanelData(dates=tuple(dates), values=values.to_numpy(dtype=float), spec=spec)


def window_count(t_len: int, initial_window: int, h: int) -> int:
    return t_len - initial_window - h + 1


def _window_bounds(k: int, initial_window: int, mode: str) -> tuple[int, int]:
    end = initial_window + k
    return (k if mode == "sliding" else 0), end


def _evaluate_window(args) -> WindowResult:
    (panel, k, initial_window, methods, scores, h, seed, n_draws,
     max_p, max_q, difference, mode) = args
    s = panel.summing
    start, end = _window_bounds(k, initial_window, mode)
    res = score_origin(s, panel.values[start:end], panel.values[end + h - 1], methods, scores,
                       origin=k, seed=seed, n_draws=n_draws, h=h, max_p=max_p, max_q=max_q,
                       difference=difference)
    return WindowResult(window=k, window_end=panel.dates[end - 1], point_forecasts=res.point_forecasts,
                        realized=res.realized, max_discrepancy=res.max_discrepancy, records=res.records)


def evaluate_windows(
    panel: PanelData,
    initial_window: int,
    methods: Iterable,
    h: int = 1,
    scores: Sequence[str] = EVAL_SCORES,
    seed: int = 0,
    n_draws: int = 10000,
    max_p: int = 3,
    max_q: int = 3,
    difference: str = "none",
    window_mode: Literal["sliding", "expanding"] = "sliding",
    workers: int | None = None,
) -> list[WindowResult]:
    if initial_window < 24:
        raise ValueError("initial_window must be at least 24")
    if h < 1:
        raise ValueError("h must be at least 1")
    if initial_window + h > panel.t_len:
        raise ValueError(f"initial_window + h = {initial_window + h} exceeds panel length {panel.t_len}")
    if window_mode not in ("sliding", "expanding"):
        raise ValueError(f"unknown window mode {window_mode!r}")
    methods = parse_method_pairs(methods)
    jobs = [(panel, k, initial_window, methods, tuple(scores), h, seed, n_draws,
             max_p, max_q, difference, window_mode)
            for k in range(window_count(panel.t_len, initial_window, h))]
    if workers is None:
        workers = int(os.environ.get("RECON_THREADS", "1") or 1)
    if workers <= 1:
        return [_evaluate_window(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate_window, jobs, chunksize=2))


def rolling_evaluate(panel: PanelData, initial_window: int, methods: Iterable, h: int = 1,
                     **kwargs) -> list[ScoreRecord]:
    """Score every rolling origin; the ``replication`` field holds the window index."""
    windows = evaluate_windows(panel, initial_window, methods, h, **kwargs)
    return [rec for w in windows for rec in w.records]


def level_groups(s: SummingMatrix, names: Sequence[str] | None = None) -> dict[str, list[str]]:
    """Series labels per level, top first, bottom level last."""
    groups = s.level_groups()
    n_levels = len(groups)
    if names is not None and len(names) != n_levels:
        raise ValueError(f"expected {n_levels} level names, got {len(names)}")
    out = {}
    for lev in sorted(groups):
        rows = groups[lev]
        if names is not None:
            name = names[lev]
        elif lev == n_levels - 1:
            name = "Bottom"
        elif s.level_prefix_lengths[lev] == 0:
            name = "Total"
        else:
            name = f"Level {lev}"
        out[name] = [s.row_labels[i] for i in rows]
    return out


def method_label(method: str, kind: str) -> str:
    if method in KIND_FREE_POINTS:
        return method
    return f"{method}({'Shrink' if kind == 'shrinkage' else 'Sample'})"


def mse_table(records, s: SummingMatrix, level_names: Sequence[str] | None = None) -> pd.DataFrame:
    """Percentage change in MSE relative to bottom-up, per level and averaged over all series.

    Methods whose point forecasts do not depend on the covariance estimator
    appear once; the others get one row per estimator.
    """
    df = records_frame(records)
    df = df[(df["score_name"] == "MSE") & df["value"].notna()]
    groups = level_groups(s, level_names)
    columns = list(groups) + ["Average"]
    if df.empty:
        return pd.DataFrame(columns=columns, dtype=float)
    mse = df.groupby(["method", "covariance_kind", "series_label"], sort=False)["value"].mean()
    rows = {}
    for (method, kind), per_series in mse.groupby(level=[0, 1], sort=False):
        label = method_label(method, kind)
        if label in rows:
            continue
        per_series = per_series.droplevel([0, 1])
        vals = {name: per_series.reindex(labs).mean() for name, labs in groups.items()}
        vals["Average"] = per_series.reindex(list(s.row_labels)).mean()
        rows[label] = vals
    if "BU" not in rows:
        raise ValueError("MSE table needs BU records as the baseline")
    base = rows["BU"]
    table = pd.DataFrame({label: {c: 100.0 * (v[c] - base[c]) / abs(base[c]) for c in columns}
                          for label, v in rows.items()}).T
    order = sorted(table.index, key=lambda lab: (_row_rank(lab), lab))
    return table.loc[order, columns]


def _row_rank(label: str) -> int:
    for i, name in enumerate(("BU", "OLS", "WLS", "MinT", "Base")):
        if label.startswith(name):
            return i
    return 99


def write_records(records, path) -> None:
    records_frame(records).to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_records(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"method": str, "covariance_kind": str, "score_name": str,
                                  "series_label": str, "reason": str},
                     keep_default_na=False, na_values={"value": ["", "nan", "NaN"]},
                     float_precision="round_trip")
    df["value"] = df["value"].astype(float)
    return df


def forecasts_frame(windows: Sequence[WindowResult], s: SummingMatrix) -> pd.DataFrame:
    """Long table of every point forecast with the realized value."""
    rows = []
    for w in windows:
        for (method, kind), mean in w.point_forecasts.items():
            for lab, f, y in zip(s.row_labels, mean, w.realized):
                rows.append((w.window, w.window_end, method, kind, lab, f, y))
    return pd.DataFrame(rows, columns=["window", "window_end", "method", "covariance_kind",
                                       "series_label", "forecast", "realized"])


def _pick_baseline(df: pd.DataFrame) -> tuple[str, str] | None:
    bu = df[df["method"] == "BU"]
    if bu.empty:
        return None
    kinds = set(bu["covariance_kind"])
    return ("BU", "sample") if "sample" in kinds else ("BU", sorted(kinds)[0])


REL_COLUMNS = ["method", "covariance_kind", "score_name", "series_label",
               "mean", "baseline_mean", "n", "rel_improvement"]


def report(records, out_dir, s: SummingMatrix | None = None, level_names=None,
           metadata: dict | None = None, univariate_files: bool = True) -> dict[str, Path]:
    """Write records.csv, table.csv, per-series univariate CSVs and metadata.json.

    Relative improvements use BU with the sample covariance as the baseline
    when present, otherwise BU with the covariance kind that was run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    df = records_frame(records)
    paths = {"records": out / "records.csv", "table": out / "table.csv"}
    write_records(df, paths["records"])

    baseline = _pick_baseline(df)
    if baseline is None or df.empty:
        rel = pd.DataFrame(columns=REL_COLUMNS)
    else:
        rel = relative_improvement(df, baseline=baseline, series_label=None)
    mv = rel[rel["series_label"] == MULTIVARIATE]
    table = table_layout(mv) if not mv.empty else pd.DataFrame(columns=["method"])
    table.to_csv(paths["table"], float_format=FLOAT_FORMAT)

    if univariate_files:
        uni = rel[rel["series_label"] != MULTIVARIATE]
        for name in UNIVARIATE_FILES:
            part = uni[uni["score_name"] == name]
            if part.empty and not df.empty and name not in set(df["score_name"]):
                continue
            paths[f"univariate_{name}"] = out / f"univariate_{name}.csv"
            part.to_csv(paths[f"univariate_{name}"], index=False, float_format=FLOAT_FORMAT)

    if s is not None and (df["score_name"] == "MSE").any():
        paths["mse"] = out / "mse_table.csv"
        mse_table(df, s, level_names).to_csv(paths["mse"], float_format=FLOAT_FORMAT)

    meta = dict(metadata or {})
    meta["baseline"] = list(baseline) if baseline else None
    meta["n_records"] = int(len(df))
    meta["n_failed"] = int(df["value"].isna().sum())
    paths["metadata"] = out / "metadata.json"
    paths["metadata"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return paths


def summary_text(table: pd.DataFrame, title: str = "") -> str:
    lines = [title] if title else []
    lines.append(table.to_string(float_format=lambda v: f"{v:7.2f}"))
    return "\n".join(lines) + "\n"
