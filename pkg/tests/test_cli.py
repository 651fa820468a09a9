import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from probrecon.cli import main
from probrecon.hierarchy import HierarchySpec, build_summing_matrix, write_hierarchy
from probrecon.reconcile import g_matrix, mint_gstar
from probrecon.covariance import shrink_cov
from probrecon.tourism import synthetic_tourism


def test_make_tourism(tmp_path, capsys):
    assert main(["make-tourism", "--out", str(tmp_path)]) == 0
    df = pd.read_csv(tmp_path / "tourism_synthetic.csv")
    assert df.shape == (264, 78)
    pd.testing.assert_frame_equal(df, pd.read_csv(pd.io.common.StringIO(synthetic_tourism().to_csv(index=False))))


def test_reconcile_command(tmp_path):
    spec = HierarchySpec(("AA", "AB", "BA", "BB"), (0, 1))
    s = build_summing_matrix(spec)
    write_hierarchy(spec, tmp_path / "h.txt")
    rng = np.random.default_rng(0)
    resid = rng.standard_normal((60, 7)) @ rng.standard_normal((7, 7))
    y_hat = rng.standard_normal(7) * 5
    pd.DataFrame({"series": s.row_labels[::-1], "forecast": y_hat[::-1]}).to_csv(tmp_path / "base.csv", index=False)
    pd.DataFrame(resid, columns=s.row_labels).to_csv(tmp_path / "resid.csv", index=False)
    out = tmp_path / "out"
    rc = main(["reconcile", "--hierarchy", str(tmp_path / "h.txt"), "--base", str(tmp_path / "base.csv"),
               "--residuals", str(tmp_path / "resid.csv"), "--method", "mint", "--cov", "shrink",
               "--out", str(out)])
    assert rc == 0
    got = pd.read_csv(out / "reconciled_mean.csv")
    w = shrink_cov(resid).w
    expected = s.s @ mint_gstar(s, w) @ y_hat
    np.testing.assert_allclose(got["mean"], expected, rtol=1e-12)
    cov = pd.read_csv(out / "bottom_cov.csv", index_col=0)
    g = g_matrix("MinT", s, w)
    np.testing.assert_allclose(cov.to_numpy(), g @ w @ g.T, rtol=1e-10)


def test_sim1_command(tmp_path, capsys):
    rc = main(["sim1", "--rho", "0.3", "--T", "101", "--reps", "2", "--draws", "200",
               "--cov", "shrink", "--out", str(tmp_path)])
    assert rc == 0
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert meta["rho"] == 0.3 and meta["off_grid"] is False
    table = pd.read_csv(tmp_path / "table.csv", header=[0, 1], index_col=0)
    assert list(table.index) == ["BU", "OLS", "WLS", "MinT", "Base"]
    assert "relative improvement" in capsys.readouterr().out


def test_evaluate_command(tmp_path):
    spec = HierarchySpec(("AA", "AB", "BA", "BB"), (0, 1))
    write_hierarchy(spec, tmp_path / "h.txt")
    rng = np.random.default_rng(1)
    values = 10 + rng.standard_normal((40, 4)).cumsum(axis=0) * 0.2 + rng.standard_normal((40, 4))
    df = pd.DataFrame(values, columns=spec.bottom_labels)
    df.insert(0, "date", [f"2000-{k:02d}" for k in range(40)])
    df.to_csv(tmp_path / "d.csv", index=False)
    out = tmp_path / "out"
    rc = main(["evaluate", "--data", str(tmp_path / "d.csv"), "--hierarchy", str(tmp_path / "h.txt"),
               "--window", "36", "--cov", "both", "--draws", "200", "--difference", "first",
               "--out", str(out)])
    assert rc == 0
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["n_windows"] == 4 and meta["window_mode"] == "sliding"
    mse = pd.read_csv(out / "mse_table.csv", index_col=0)
    assert set(mse.index) == {"BU", "OLS", "WLS", "MinT(Sample)", "MinT(Shrink)", "Base"}
    assert (mse.loc["BU"] == 0).all() and mse.loc["Base", "Bottom"] == 0


def test_bad_arguments(tmp_path):
    with pytest.raises(SystemExit):
        main(["evaluate", "--data", "x", "--hierarchy", "y", "--difference", "twice", "--out", str(tmp_path)])
    with pytest.raises(SystemExit):
        main(["sim1", "--methods", "erm", "--out", str(tmp_path), "--reps", "1"])


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "probrecon.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "evaluate" in res.stdout
