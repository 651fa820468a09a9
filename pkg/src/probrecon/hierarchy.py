"""Summing matrices for strictly hierarchical collections of time series.

A hierarchy is described by its bottom-level labels and a list of prefix
lengths.  Each prefix length defines one aggregation level: bottom series
sharing a label prefix of that length are summed into one aggregate series.
Prefix length 0 yields the overall total.

Rows of the summing matrix are ordered top level first, labels sorted
lexicographically within a level, followed by the ``n x n`` identity block
for the bottom series.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

TOTAL_LABEL = "Total"


class HierarchyError(ValueError):
    """Raised for malformed hierarchy specifications or shape mismatches."""


@dataclass(frozen=True)
class HierarchySpec:
    bottom_labels: tuple[str, ...]
    level_prefix_lengths: tuple[int, ...] = (0,)

    def __post_init__(self):
        object.__setattr__(self, "bottom_labels", tuple(self.bottom_labels))
        object.__setattr__(self, "level_prefix_lengths", tuple(int(k) for k in self.level_prefix_lengths))
        labels = self.bottom_labels
        if not labels:
            raise HierarchyError("hierarchy has no bottom series")
        if any(not isinstance(lab, str) or lab == "" for lab in labels):
            raise HierarchyError("bottom labels must be non-empty strings")
        if len(set(labels)) != len(labels):
            dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
            raise HierarchyError(f"duplicate bottom labels: {dupes}")
        prefixes = self.level_prefix_lengths
        if any(k < 0 for k in prefixes):
            raise HierarchyError("prefix lengths must be non-negative")
        if any(b <= a for a, b in zip(prefixes, prefixes[1:])):
            raise HierarchyError(f"prefix lengths must be strictly increasing, got {list(prefixes)}")
        shortest = min(len(lab) for lab in labels)
        if prefixes and prefixes[-1] >= shortest:
            raise HierarchyError(
                f"prefix length {prefixes[-1]} is not shorter than bottom label length {shortest}"
            )


@dataclass(frozen=True)
class SummingMatrix:
    """Aggregation matrix ``S`` (m x n) with row metadata.

    ``levels`` holds one entry per row: the index of the aggregation level the
    row belongs to, with the bottom block numbered ``len(level_prefix_lengths)``.
    """

    s: np.ndarray
    row_labels: tuple[str, ...]
    levels: tuple[int, ...] = field(default=())
    level_prefix_lengths: tuple[int, ...] = field(default=())

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        if s.ndim != 2:
            raise HierarchyError("summing matrix must be 2-dimensional")
        m, n = s.shape
        if m < n:
            raise HierarchyError(f"summing matrix has fewer rows ({m}) than columns ({n})")
        if not np.array_equal(s[m - n:], np.eye(n)):
            raise HierarchyError("bottom n rows of S must be the identity")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)
        if len(self.row_labels) != m:
            raise HierarchyError("row_labels length does not match S")
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        if not self.levels:
            object.__setattr__(self, "levels", tuple([0] * (m - n) + [1] * n))

    @property
    def m(self) -> int:
        return self.s.shape[0]

    @property
    def n(self) -> int:
        return self.s.shape[1]

    @property
    def m_star(self) -> int:
        return self.m - self.n

    @property
    def aggregation_block(self) -> np.ndarray:
        """The ``C`` block of S, i.e. the first ``m - n`` rows."""
        return self.s[: self.m_star]

    @property
    def bottom_labels(self) -> tuple[str, ...]:
        return self.row_labels[self.m_star:]

    def level_groups(self) -> dict[int, list[int]]:
        groups: dict[int, list[int]] = {}
        for i, lev in enumerate(self.levels):
            groups.setdefault(lev, []).append(i)
        return groups

    @classmethod
    def from_array(cls, s, row_labels: Sequence[str] | None = None) -> "SummingMatrix":
        s = np.asarray(s, dtype=float)
        if row_labels is None:
            row_labels = [f"s{i}" for i in range(s.shape[0])]
        return cls(s=s, row_labels=tuple(row_labels))


def build_summing_matrix(spec: HierarchySpec) -> SummingMatrix:
    labels = spec.bottom_labels
    n = len(labels)
    rows = []
    row_labels = []
    levels = []
    for lev, k in enumerate(spec.level_prefix_lengths):
        for prefix in sorted({lab[:k] for lab in labels}):
            rows.append([1.0 if lab[:k] == prefix else 0.0 for lab in labels])
            row_labels.append(TOTAL_LABEL if k == 0 else prefix)
            levels.append(lev)
    n_levels = len(spec.level_prefix_lengths)
    agg = np.array(rows, dtype=float).reshape(len(rows), n)
    s = np.vstack([agg, np.eye(n)])
    return SummingMatrix(
        s=s,
        row_labels=tuple(row_labels) + labels,
        levels=tuple(levels) + (n_levels,) * n,
        level_prefix_lengths=spec.level_prefix_lengths,
    )


def aggregate(s: SummingMatrix, b) -> np.ndarray:
    """Map bottom-level values to the full hierarchy: ``y = S b``.

    ``b`` may be a single n-vector or a ``T x n`` panel (rows are time points).
    """
    b = np.asarray(b, dtype=float)
    if b.shape[-1] != s.n:
        raise HierarchyError(f"expected {s.n} bottom values, got {b.shape[-1]}")
    return b @ s.s.T


def coherence_discrepancy(s: SummingMatrix, y) -> float:
    """Max-norm violation of the aggregation constraints by ``y``."""
    y = np.asarray(y, dtype=float)
    if y.shape != (s.m,):
        raise HierarchyError(f"expected vector of length {s.m}, got shape {y.shape}")
    if s.m_star == 0:
        return 0.0
    gap = y[: s.m_star] - s.aggregation_block @ y[s.m_star:]
    return float(np.max(np.abs(gap)))


def read_hierarchy(path) -> HierarchySpec:
    """Parse a hierarchy file: prefix lengths on line 1, one bottom label per line after."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise HierarchyError(f"{path}: empty hierarchy file")
    head = lines[0].strip()
    try:
        prefixes = [int(tok) for tok in head.split(",") if tok.strip()]
    except ValueError as exc:
        raise HierarchyError(f"{path}: line 1 must be comma-separated integers") from exc
    labels = [ln.strip() for ln in lines[1:] if ln.strip()]
    return HierarchySpec(bottom_labels=tuple(labels), level_prefix_lengths=tuple(prefixes))


def write_hierarchy(spec: HierarchySpec, path) -> None:
    body = ",".join(str(k) for k in spec.level_prefix_lengths) + "\n"
    body += "\n".join(spec.bottom_labels) + "\n"
    Path(path).write_text(body, encoding="utf-8")
