"""Seeded synthetic panel shaped like the Australian domestic tourism hierarchy.

77 regions in 7 states, monthly from January 1998 to December 2019.  Each
region is a positive series ``level * trend * exp(seasonal + noise)`` where
the seasonal profile is shared within a state and the noise mixes a national
shock, a state shock and an idiosyncratic AR(1) component.  It is a stand-in
for end-to-end runs, not a model of the real data.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .hierarchy import HierarchySpec, write_hierarchy

REGION_LABELS = (
    "AAA", "AAB", "ABA", "ABB", "ACA", "ADA", "ADB", "ADC", "ADD", "AEA", "AEB", "AEC", "AED", "AFA",
    "BAA", "BAB", "BAC", "BBA", "BCA", "BCB", "BCC", "BDA", "BDB", "BDC", "BDD", "BDE", "BDF",
    "BEA", "BEB", "BEC", "BED", "BEE", "BEF", "BEG", "BEH",
    "CAA", "CAB", "CAC", "CBA", "CBB", "CBC", "CBD", "CBE", "CCA", "CCB", "CCC", "CDA", "CDB",
    "DAA", "DAB", "DAC", "DBA", "DBB", "DBC", "DBD", "DCA", "DCB", "DCC", "DDA", "DDB",
    "EAA", "EAB", "EAC", "EBA", "ECA",
    "FAA", "FBA", "FBB", "FCA", "FCB",
    "GAA", "GAB", "GAC", "GBA", "GBB", "GBC", "GBD",
)
STATE_NAMES = {"A": "NSW", "B": "VIC", "C": "QLD", "D": "SA", "E": "WA", "F": "TAS", "G": "NT"}
LEVEL_NAMES = ("Total", "States", "Regions")
START = "1998-01"
N_MONTHS = 264
DEFAULT_SEED = 2020
DATA_CSV = "tourism_synthetic.csv"
DATA_HIERARCHY = "tourism_hierarchy.txt"


def tourism_spec() -> HierarchySpec:
    return HierarchySpec(REGION_LABELS, (0, 1))


def month_labels(n: int = N_MONTHS, start: str = START) -> list[str]:
    return [str(p) for p in pd.period_range(start=start, periods=n, freq="M")]


def synthetic_tourism(seed: int = DEFAULT_SEED, n_months: int = N_MONTHS) -> pd.DataFrame:
    """Wide frame: ``date`` column followed by one column per region, rounded to 3 decimals."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 77])))
    states = sorted(STATE_NAMES)
    state_of = np.array([states.index(lab[0]) for lab in REGION_LABELS])
    n = len(REGION_LABELS)
    t = np.arange(n_months)
    month = t % 12

    level = np.exp(rng.uniform(4.0, 7.5, size=n))
    growth = rng.uniform(-0.1, 0.4, size=n)
    trend = 1.0 + growth[None, :] * t[:, None] / n_months

    phase = rng.uniform(0, 2 * np.pi, size=len(states))
    amp = rng.uniform(0.05, 0.35, size=len(states))
    state_season = amp[:, None] * np.cos(2 * np.pi * month[None, :] / 12 - phase[:, None])
    region_scale = rng.uniform(0.6, 1.4, size=n)
    season = (state_season[state_of] * region_scale[:, None]).T
    season += 0.04 * rng.standard_normal((12, n))[month]

    national = 0.03 * rng.standard_normal(n_months)
    state_shock = 0.05 * rng.standard_normal((n_months, len(states)))
    idio = np.empty((n_months, n))
    sd = rng.uniform(0.06, 0.2, size=n)
    prev = np.zeros(n)
    for k in range(n_months):
        prev = 0.4 * prev + sd * rng.standard_normal(n)
        idio[k] = prev
    noise = national[:, None] + state_shock[:, state_of] + idio

    values = level[None, :] * trend * np.exp(season + noise)
    df = pd.DataFrame(np.round(values, 3), columns=list(REGION_LABELS))
    df.insert(0, "date", month_labels(n_months))
    return df


def write_tourism(out_dir, seed: int = DEFAULT_SEED) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, spec_path = out / DATA_CSV, out / DATA_HIERARCHY
    synthetic_tourism(seed).to_csv(csv_path, index=False)
    write_hierarchy(tourism_spec(), spec_path)
    return csv_path, spec_path


def bundled_paths() -> tuple[Path, Path]:
    """Locations of the shipped synthetic panel and its hierarchy file."""
    root = resources.files("probrecon") / "data"
    return Path(str(root / DATA_CSV)), Path(str(root / DATA_HIERARCHY))
