"""Command-line entry point: ``probrecon <sim1|sim2|reconcile|evaluate|make-tourism>``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from . import __version__
from .covariance import CovarianceError, estimate
from .evaluation import (
    EVAL_SCORES,
    FLOAT_FORMAT,
    evaluate_windows,
    forecasts_frame,
    load_panel,
    mse_table,
    report,
    summary_text,
)
from .hierarchy import build_summing_matrix, read_hierarchy
from .models import parse_difference
from .pipeline import DEFAULT_SCORES
from .reconcile import ReconciliationError, g_matrix, marginal_variances, reconcile_gaussian
from .simulation import Setup1Config, Setup2Config, relative_improvement, run_replications, table_layout
from .tourism import LEVEL_NAMES, tourism_spec, write_tourism

log = logging.getLogger("probrecon")

METHOD_NAMES = {"base": "Base", "bu": "BU", "ols": "OLS", "wls": "WLS", "mint": "MinT"}
COV_KINDS = {"sample": ("sample",), "shrink": ("shrinkage",), "both": ("sample", "shrinkage")}


def _methods(text: str, cov: str, with_base: bool = True) -> list[tuple[str, str]]:
    names = []
    for token in text.split(","):
        token = token.strip().lower()
        if not token:
            continue
        if token not in METHOD_NAMES:
            raise SystemExit(f"unknown method {token!r}; choose from {', '.join(METHOD_NAMES)}")
        names.append(METHOD_NAMES[token])
    if with_base and "Base" not in names:
        names.append("Base")
    return [(m, k) for k in COV_KINDS[cov] for m in names]


def _difference(text: str) -> str:
    try:
        parse_difference(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _common_sim_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--T", dest="t_len", type=int, default=501, help="series length including the test point")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cov", choices=sorted(COV_KINDS), default="both")
    p.add_argument("--methods", default="bu,ols,wls,mint,base")
    p.add_argument("--draws", type=int, default=10000, help="Monte Carlo draws for ES/VS")
    p.add_argument("--max-p", type=int, default=3)
    p.add_argument("--max-q", type=int, default=3)
    p.add_argument("--out", type=Path, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probrecon", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p1 = sub.add_parser("sim1", help="Setup 1: four bottom series, block VAR(1)")
    p1.add_argument("--rho", type=float, default=0.5)
    _common_sim_args(p1)

    p2 = sub.add_parser("sim2", help="Setup 2: 36 bottom series in six groups")
    p2.add_argument("--corr", choices=("nonneg", "mixed"), default="nonneg")
    _common_sim_args(p2)

    pr = sub.add_parser("reconcile", help="reconcile one set of base forecasts")
    pr.add_argument("--hierarchy", type=Path, required=True)
    pr.add_argument("--base", type=Path, required=True,
                    help="CSV with columns series,forecast (one row per series)")
    pr.add_argument("--residuals", type=Path, required=True,
                    help="CSV of in-sample 1-step errors, one column per series")
    pr.add_argument("--method", choices=("bu", "ols", "wls", "mint"), default="mint")
    pr.add_argument("--cov", choices=("sample", "shrink"), default="shrink")
    pr.add_argument("--out", type=Path, required=True)

    pe = sub.add_parser("evaluate", help="rolling-window evaluation of a panel")
    pe.add_argument("--data", type=Path, required=True)
    pe.add_argument("--hierarchy", type=Path, required=True)
    pe.add_argument("--window", type=int, default=120)
    pe.add_argument("--h", type=int, default=1)
    pe.add_argument("--methods", default="bu,ols,wls,mint")
    pe.add_argument("--cov", choices=sorted(COV_KINDS), default="shrink")
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--draws", type=int, default=10000)
    pe.add_argument("--max-p", type=int, default=3)
    pe.add_argument("--max-q", type=int, default=3)
    pe.add_argument("--difference", type=_difference, default="none")
    pe.add_argument("--window-mode", choices=("sliding", "expanding"), default="sliding")
    pe.add_argument("--level-names", default=None,
                    help="comma-separated names for the levels, top first")
    pe.add_argument("--allow-partial", action="store_true",
                    help="exit 0 even if some windows failed")
    pe.add_argument("--out", type=Path, required=True)

    pt = sub.add_parser("make-tourism", help="write the synthetic tourism-shaped panel")
    pt.add_argument("--seed", type=int, default=2020)
    pt.add_argument("--out", type=Path, required=True)
    return parser


def _run_sim(args, setup, extra_meta) -> int:
    methods = _methods(args.methods, args.cov)
    records = run_replications(setup, methods, DEFAULT_SCORES, n_draws=args.draws,
                               max_p=args.max_p, max_q=args.max_q)
    meta = {
        "command": args.command, "t_len": setup.t_len, "reps": setup.reps, "seed": setup.seed,
        "methods": [f"{m}-{k}" for m, k in methods], "draws": args.draws,
        "max_p": args.max_p, "max_q": args.max_q, "burn_in": 200,
        "base_density_covariance": "same estimator as the column's reconciled methods",
        **extra_meta,
    }
    report(records, args.out, s=setup.hierarchy, metadata=meta)
    baseline = ("BU", COV_KINDS[args.cov][0])
    rel = relative_improvement(records, baseline=baseline)
    sys.stdout.write(summary_text(table_layout(rel), "relative improvement (%) vs BU"))
    return 0


def _cmd_sim1(args) -> int:
    cfg = Setup1Config(rho=args.rho, t_len=args.t_len, reps=args.reps, seed=args.seed)
    if cfg.off_grid:
        log.warning("rho = %g is outside the grid 0, +-0.1, ..., +-0.8", cfg.rho)
    return _run_sim(args, cfg, {"rho": cfg.rho, "off_grid": cfg.off_grid})


def _cmd_sim2(args) -> int:
    mode = "nonnegative" if args.corr == "nonneg" else "mixed"
    cfg = Setup2Config(correlation_mode=mode, t_len=args.t_len, reps=args.reps, seed=args.seed)
    return _run_sim(args, cfg, {"correlation_mode": mode,
                                "setup2_parameters": "seeded random stable blocks, constant between-block correlation"})


def _cmd_reconcile(args) -> int:
    s = build_summing_matrix(read_hierarchy(args.hierarchy))
    base = pd.read_csv(args.base)
    if list(base.columns[:2]) != ["series", "forecast"]:
        raise SystemExit("base forecast CSV must have columns series,forecast")
    base = base.set_index("series")["forecast"]
    resid = pd.read_csv(args.residuals)
    missing = [lab for lab in s.row_labels if lab not in base.index or lab not in resid.columns]
    if missing:
        raise SystemExit(f"series missing from inputs: {missing}")
    y_hat = base.reindex(list(s.row_labels)).to_numpy(dtype=float)
    kind = "shrinkage" if args.cov == "shrink" else "sample"
    try:
        w = estimate(resid[list(s.row_labels)].to_numpy(dtype=float), kind)
        g = g_matrix(METHOD_NAMES[args.method], s, w)
        rec = reconcile_gaussian(g, s, y_hat, w)
    except (CovarianceError, ReconciliationError) as exc:
        raise SystemExit(f"reconciliation failed: {exc}") from None
    args.out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({"series": s.row_labels, "mean": rec.full_mean, "variance": marginal_variances(rec)}) \
        .to_csv(args.out / "reconciled_mean.csv", index=False, float_format=FLOAT_FORMAT)
    bottom = list(s.bottom_labels)
    pd.DataFrame(rec.bottom_cov, index=bottom, columns=bottom) \
        .to_csv(args.out / "bottom_cov.csv", float_format=FLOAT_FORMAT)
    return 0


def _cmd_evaluate(args) -> int:
    panel = load_panel(args.data, args.hierarchy)
    s = panel.summing
    level_names = args.level_names.split(",") if args.level_names else None
    if level_names is None and panel.spec == tourism_spec():
        level_names = list(LEVEL_NAMES)
    methods = _methods(args.methods, args.cov)
    windows = evaluate_windows(panel, args.window, methods, h=args.h, scores=EVAL_SCORES,
                               seed=args.seed, n_draws=args.draws, max_p=args.max_p,
                               max_q=args.max_q, difference=args.difference,
                               window_mode=args.window_mode)
    records = [r for w in windows for r in w.records]
    failed = [w.window for w in windows if w.failed]
    worst = max((w.max_discrepancy for w in windows), default=0.0)
    meta = {
        "command": "evaluate", "data": str(args.data), "hierarchy": str(args.hierarchy),
        "window": args.window, "h": args.h, "window_mode": args.window_mode,
        "n_windows": len(windows), "failed_windows": failed, "seed": args.seed,
        "draws": args.draws, "max_p": args.max_p, "max_q": args.max_q,
        "difference": args.difference, "methods": [f"{m}-{k}" for m, k in methods],
        "covariance_horizon": "1-step W used for every horizon",
        "base_density_covariance": args.cov, "max_coherence_discrepancy": worst,
    }
    report(records, args.out, s=s, level_names=level_names, metadata=meta)
    forecasts_frame(windows, s).to_csv(args.out / "forecasts.csv", index=False, float_format=FLOAT_FORMAT)
    sys.stdout.write(summary_text(mse_table(records, s, level_names), "MSE relative improvement (%) vs BU"))
    if failed:
        log.warning("%d of %d windows had failures", len(failed), len(windows))
        if not args.allow_partial:
            return 2
    return 0


def _cmd_make_tourism(args) -> int:
    csv_path, spec_path = write_tourism(args.out, args.seed)
    print(csv_path)
    print(spec_path)
    return 0


COMMANDS = {
    "sim1": _cmd_sim1, "sim2": _cmd_sim2, "reconcile": _cmd_reconcile,
    "evaluate": _cmd_evaluate, "make-tourism": _cmd_make_tourism,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
