import string

import numpy as np
import pytest

from probrecon.hierarchy import HierarchySpec, build_summing_matrix

FIGURE1_LABELS = ("AA", "AB", "AC", "BA", "BB")


def random_hierarchy(rng, max_n=20, max_m=50):
    """Random strict hierarchy with 1 or 2 aggregation levels below the total."""
    while True:
        n_top = int(rng.integers(1, 5))
        labels = []
        two_deep = bool(rng.integers(0, 2))
        for a in string.ascii_uppercase[:n_top]:
            for b in string.ascii_uppercase[: int(rng.integers(1, 5))]:
                if two_deep:
                    labels += [a + b + c for c in string.ascii_uppercase[: int(rng.integers(1, 4))]]
                else:
                    labels.append(a + b)
        prefixes = [0, 1] if not two_deep else [0, 1, 2][: int(rng.integers(2, 4))]
        if not bool(rng.integers(0, 3)):
            prefixes = prefixes[1:] or [0]
        s = build_summing_matrix(HierarchySpec(tuple(labels), tuple(prefixes)))
        if 2 <= s.n <= max_n and s.m <= max_m:
            return s


def random_pd(rng, m, cond_floor=0.05):
    a = rng.standard_normal((m, m + 3))
    w = a @ a.T / (m + 3) + cond_floor * np.eye(m)
    return 0.5 * (w + w.T)


@pytest.fixture
def figure1():
    return build_summing_matrix(HierarchySpec(FIGURE1_LABELS, (0, 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
