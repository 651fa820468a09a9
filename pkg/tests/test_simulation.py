import numpy as np
import pandas as pd
import pytest
from scipy.linalg import solve_discrete_lyapunov

from probrecon.hierarchy import aggregate, coherence_discrepancy
from probrecon.pipeline import MULTIVARIATE, ScoreRecord
from probrecon.simulation import (
    Setup1Config,
    Setup2Config,
    SimulationError,
    dgp_setup1,
    dgp_setup2,
    records_frame,
    relative_improvement,
    repair_pd,
    run_replications,
    setup1_coefficients,
    setup1_hierarchy,
    setup1_innovation_cov,
    setup2_hierarchy,
    setup2_parameters,
    table_layout,
    var1_coefficients_setup1,
)


def innovations(panel, a):
    return panel[1:] - panel[:-1] @ a.T


def test_setup1_coefficients():
    a1, a2 = var1_coefficients_setup1()
    np.testing.assert_allclose(a1, [[0.3, -0.3 * np.sqrt(3)], [0.3 * np.sqrt(3), 0.3]], atol=1e-15)
    for a, r, theta in ((a1, 0.6, np.pi / 3), (a2, 0.9, np.pi / 6)):
        eig = np.sort_complex(np.linalg.eigvals(a))
        expected = np.sort_complex(r * np.exp(np.array([1j, -1j]) * theta))
        np.testing.assert_allclose(eig, expected, atol=1e-12)
    assert np.max(np.abs(np.linalg.eigvals(setup1_coefficients()))) == pytest.approx(0.9, abs=1e-12)


def test_setup1_config_validation():
    assert not Setup1Config(rho=0.3).off_grid
    assert Setup1Config(rho=0.85).off_grid
    assert Setup1Config(rho=0.25).off_grid
    with pytest.raises(ValueError):
        Setup1Config(rho=1.0)
    with pytest.raises(ValueError):
        Setup2Config(correlation_mode="negative")


@pytest.mark.parametrize("rho, target, tol", [(0.0, 0.0, 0.05), (0.8, 0.8, 0.03)])
def test_setup1_innovation_correlation(rho, target, tol):
    panel = dgp_setup1(Setup1Config(rho=rho, t_len=5000, seed=3), rep=0)
    eps = innovations(panel, setup1_coefficients())
    corr = np.corrcoef(eps.T)
    assert corr[0, 1] == pytest.approx(target, abs=tol)
    assert corr[2, 3] == pytest.approx(target, abs=tol)
    assert abs(corr[0, 2]) < 0.05


def test_setup1_stationary_moments():
    a, sigma = setup1_coefficients(), setup1_innovation_cov(0.5)
    theory = np.diag(solve_discrete_lyapunov(a, sigma))
    for rep in range(5):
        panel = dgp_setup1(Setup1Config(rho=0.5, t_len=501, seed=1), rep)
        assert panel.shape == (501, 4)
        var = panel.var(axis=0)
        assert np.all(var < 10 * theory) and np.all(var > theory / 10)
        assert np.all(np.abs(panel.mean(axis=0)) < 4 * np.sqrt(theory / 501 * 20))


def test_setup1_rep_streams_differ_and_repeat():
    cfg = Setup1Config(rho=0.2, t_len=101, seed=5)
    np.testing.assert_array_equal(dgp_setup1(cfg, 3), dgp_setup1(cfg, 3))
    assert not np.array_equal(dgp_setup1(cfg, 3), dgp_setup1(cfg, 4))


@pytest.mark.parametrize("mode", ["nonnegative", "mixed"])
def test_setup2_parameters(mode):
    a, cov = setup2_parameters(7, mode)
    np.linalg.cholesky(cov)
    assert np.max(np.abs(np.linalg.eigvals(a))) < 0.9 + 1e-12
    # block-diagonal coefficients
    mask = np.kron(np.eye(6), np.ones((6, 6))) == 0
    assert np.all(a[mask] == 0)
    sd = np.sqrt(np.diag(cov))
    assert np.all((sd >= np.sqrt(2) - 1e-9) & (sd <= np.sqrt(6) + 1e-9))
    corr = cov / np.outer(sd, sd)
    if mode == "nonnegative":
        assert np.all(corr >= 0)
    else:
        assert np.any(corr < 0)


def test_setup2_parameters_fixed_per_seed():
    a1, c1 = setup2_parameters(3, "mixed")
    a2, _ = setup2_parameters(3, "nonnegative")
    np.testing.assert_array_equal(a1, a2)
    assert not np.array_equal(a1, setup2_parameters(4, "mixed")[0])


def test_setup2_panel_coherent():
    s = setup2_hierarchy()
    assert s.m == 43 and s.n == 36
    panel = dgp_setup2(Setup2Config("mixed", t_len=101, seed=0), 2)
    assert panel.shape == (101, 36)
    full = aggregate(s, panel)
    # zero up to floating-point summation order
    assert max(coherence_discrepancy(s, row) for row in full) < 1e-12 * np.abs(full).max()


def test_repair_pd_fixes_indefinite():
    bad = np.array([[2.0, 1.9, -1.9], [1.9, 2.0, 1.9], [-1.9, 1.9, 2.0]])
    fixed = repair_pd(bad)
    np.linalg.cholesky(fixed)
    np.testing.assert_allclose(np.diag(fixed), np.diag(bad))


def test_self_baseline_is_zero():
    cfg = Setup1Config(rho=0.5, t_len=101, reps=3, seed=2)
    recs = run_replications(cfg, methods=[("BU", "sample")], scores=("LS", "ES", "VS"), n_draws=500)
    rel = relative_improvement(recs)
    assert set(rel["score_name"]) == {"LS", "ES", "VS"}
    assert np.all(rel["rel_improvement"] == 0.0)


def test_record_counts_complete():
    cfg = Setup1Config(rho=0.5, t_len=101, reps=2, seed=2)
    methods = [("BU", "sample"), ("MinT", "shrinkage"), ("Base", "sample")]
    scores = ("LS", "ES", "VS", "CRPS", "IS80", "IS95", "MSE")
    df = records_frame(run_replications(cfg, methods, scores, n_draws=200))
    m = 7
    counts = df.groupby(["replication", "method", "covariance_kind"]).size()
    # reconciled: 3 multivariate + 5 univariate scores per series; Base has no multivariate LS
    assert counts[(0, "BU", "sample")] == 3 + 5 * m
    assert counts[(1, "MinT", "shrinkage")] == 3 + 5 * m
    assert counts[(0, "Base", "sample")] == 2 + 5 * m
    assert not ((df["method"] == "Base") & (df["score_name"] == "LS") & (df["series_label"] == MULTIVARIATE)).any()
    assert df["value"].notna().all()
    assert list(df["replication"]) == sorted(df["replication"])


def test_determinism_across_workers():
    cfg = Setup1Config(rho=-0.3, t_len=101, reps=3, seed=9)
    methods = [("OLS", "sample"), ("MinT", "shrinkage")]
    a = run_replications(cfg, methods, ("LS", "ES", "VS"), n_draws=300, workers=1)
    b = run_replications(cfg, methods, ("LS", "ES", "VS"), n_draws=300, workers=2)
    assert a == b


def test_reconciled_forecasts_coherent():
    from probrecon.pipeline import score_origin
    s = setup1_hierarchy()
    panel = dgp_setup1(Setup1Config(t_len=101, seed=1), 0)
    res = score_origin(s, panel[:-1], panel[-1], [("OLS", "sample"), ("WLS", "shrinkage"), ("MinT", "sample")],
                       scores=("MSE",))
    for mean in res.point_forecasts.values():
        assert coherence_discrepancy(s, mean) < 1e-8


def rec(rep, method, kind, score, value, label=MULTIVARIATE):
    return ScoreRecord(rep, method, kind, score, label, value)


def test_relative_improvement_sign_and_exclusion():
    recs = [
        rec(0, "BU", "sample", "ES", 10.0), rec(1, "BU", "sample", "ES", 20.0),
        rec(2, "BU", "sample", "ES", 1000.0),
        rec(0, "MinT", "sample", "ES", 9.0), rec(1, "MinT", "sample", "ES", 18.0),
        rec(2, "MinT", "sample", "ES", float("nan")),
        rec(0, "Base", "sample", "LS", 1.0), rec(0, "BU", "sample", "LS", 2.0),
    ]
    rel = relative_improvement(recs).set_index(["method", "score_name"])
    assert rel.loc[("MinT", "ES"), "rel_improvement"] == pytest.approx(-10.0)
    assert rel.loc[("MinT", "ES"), "n"] == 2
    assert rel.loc[("BU", "ES"), "n"] == 3
    assert ("Base", "LS") not in rel.index


def test_relative_improvement_errors():
    with pytest.raises(SimulationError):
        relative_improvement([rec(0, "OLS", "sample", "ES", 1.0)])
    with pytest.raises(SimulationError):
        relative_improvement([rec(0, "BU", "sample", "ES", 0.0), rec(0, "OLS", "sample", "ES", 1.0)])


def test_table_layout_structure():
    recs = []
    for kind in ("sample", "shrinkage"):
        for method in ("BU", "OLS", "WLS", "MinT", "Base"):
            for score in ("LS", "ES", "VS"):
                if method == "Base" and score == "LS":
                    continue
                recs.append(rec(0, method, kind, score, 1.0 + len(method)))
    table = table_layout(relative_improvement(recs))
    assert list(table.index) == ["BU", "OLS", "WLS", "MinT", "Base"]
    assert list(table.columns) == [(k, s) for k in ("sample", "shrinkage") for s in ("LS", "ES", "VS")]
    assert np.isnan(table.loc["Base", ("sample", "LS")])
    assert table.loc["BU", ("sample", "ES")] == 0.0
