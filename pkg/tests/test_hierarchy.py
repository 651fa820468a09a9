import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probrecon.hierarchy import (
    HierarchyError,
    HierarchySpec,
    SummingMatrix,
    aggregate,
    build_summing_matrix,
    coherence_discrepancy,
    read_hierarchy,
    write_hierarchy,
)

from conftest import random_hierarchy

FIGURE1_S = np.array([
    [1, 1, 1, 1, 1],
    [1, 1, 1, 0, 0],
    [0, 0, 0, 1, 1],
    [1, 0, 0, 0, 0],
    [0, 1, 0, 0, 0],
    [0, 0, 1, 0, 0],
    [0, 0, 0, 1, 0],
    [0, 0, 0, 0, 1],
], dtype=float)


def test_figure1_matrix_entry_exact(figure1):
    assert figure1.m == 8 and figure1.n == 5
    np.testing.assert_array_equal(figure1.s, FIGURE1_S)
    assert figure1.row_labels == ("Total", "A", "B", "AA", "AB", "AC", "BA", "BB")


def test_single_series_hierarchy():
    s = build_summing_matrix(HierarchySpec(("A",), (0,)))
    np.testing.assert_array_equal(s.s, [[1.0], [1.0]])


def test_setup2_shape():
    labels = [f"{k}{j}" for k in range(1, 7) for j in range(1, 7)]
    s = build_summing_matrix(HierarchySpec(labels, (0, 1)))
    assert s.s.shape == (43, 36)
    np.testing.assert_array_equal(s.aggregation_block.sum(axis=1), [36, 6, 6, 6, 6, 6, 6])


def test_rows_sorted_within_level():
    s = build_summing_matrix(HierarchySpec(("BB", "AA", "BA", "AB"), (0, 1)))
    assert s.row_labels[:3] == ("Total", "A", "B")
    # bottom block keeps the given label order
    assert s.bottom_labels == ("BB", "AA", "BA", "AB")
    np.testing.assert_array_equal(s.s[1], [0, 1, 0, 1])


@pytest.mark.parametrize("labels, prefixes", [
    (("AA", "AA"), (0,)),
    (("AA", "AB"), (0, 2)),
    (("A", "B"), (1,)),
    ((), (0,)),
    (("AA", ""), (0,)),
    (("AAA", "AAB"), (1, 1)),
    (("AAA", "AAB"), (2, 1)),
    (("AAA", "AAB"), (-1,)),
])
def test_invalid_specs(labels, prefixes):
    with pytest.raises(HierarchyError):
        build_summing_matrix(HierarchySpec(labels, prefixes))


def test_aggregate_examples(figure1):
    np.testing.assert_array_equal(aggregate(figure1, np.ones(5)), [5, 3, 2, 1, 1, 1, 1, 1])
    np.testing.assert_array_equal(aggregate(figure1, np.zeros(5)), np.zeros(8))
    np.testing.assert_array_equal(aggregate(figure1, [1, 2, 3, 4, 5]), [15, 6, 9, 1, 2, 3, 4, 5])


def test_aggregate_panel(figure1):
    b = np.arange(15.0).reshape(3, 5)
    np.testing.assert_array_equal(aggregate(figure1, b), b @ FIGURE1_S.T)


def test_aggregate_dimension_mismatch(figure1):
    with pytest.raises(HierarchyError):
        aggregate(figure1, np.ones(4))


def test_coherence_discrepancy_examples(figure1):
    assert coherence_discrepancy(figure1, aggregate(figure1, [3.0, -1, 2, 7, 0.5])) == 0.0
    y = np.zeros(8)
    y[0] = 1.0
    assert coherence_discrepancy(figure1, y) == 1.0
    with pytest.raises(HierarchyError):
        coherence_discrepancy(figure1, np.zeros(7))


def test_summing_matrix_rejects_bad_bottom_block():
    with pytest.raises(HierarchyError):
        SummingMatrix.from_array(np.array([[1.0, 1.0], [1.0, 0.0], [1.0, 1.0]]))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_random_hierarchy_invariants(seed):
    rng = np.random.default_rng(seed)
    s = random_hierarchy(rng)
    np.testing.assert_array_equal(s.s[s.m_star:], np.eye(s.n))
    assert np.linalg.matrix_rank(s.s) == s.n
    # every column is covered once in each aggregation level
    for lev, rows in s.level_groups().items():
        np.testing.assert_array_equal(s.s[rows].sum(axis=0), np.ones(s.n))
    sts = s.s.T @ s.s
    np.testing.assert_array_equal(sts, sts.T)
    assert np.all(np.linalg.eigvalsh(sts) > 0)
    b = rng.standard_normal(s.n)
    assert coherence_discrepancy(s, aggregate(s, b)) < 1e-12


def test_hierarchy_file_round_trip(tmp_path):
    spec = HierarchySpec(("AAA", "AAB", "BAA"), (0, 1, 2))
    path = tmp_path / "h.txt"
    write_hierarchy(spec, path)
    assert path.read_text().splitlines()[0] == "0,1,2"
    assert read_hierarchy(path) == spec


def test_hierarchy_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("0,x\nAA\n")
    with pytest.raises(HierarchyError):
        read_hierarchy(bad)
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    with pytest.raises(HierarchyError):
        read_hierarchy(empty)
