import csv
import io

import numpy as np
import pytest

from focalgmm import ValidationError
from focalgmm.bench import (ResultTable, replicate, rows_to_csv, run_replications, run_table,
                            table_cells, table_rows)
from focalgmm.bench import tested_positions as positions_under_test
from focalgmm.dgp import DgpConfig, simulate

SMALL = DgpConfig(p=10, q=20, n=60, seed=1)


def test_replicate_keys():
    rec = replicate(SMALL, 0)
    for key in ("2sls_rho_sq", "rmd_rho_sq", "drgmm_rho_sq", "rmd_l2_delta", "drgmm_l2_delta",
                "rmd_fp", "drgmm_size", "drgmm_power", "lambda"):
        assert key in rec
    assert rec["ok"]


def test_parallel_and_serial_agree():
    a = run_replications(SMALL, reps=3, threads=1)
    b = run_replications(SMALL, reps=3, threads=2)
    assert a.records == b.records
    assert [r["rep"] for r in b.records] == [0, 1, 2]


def test_failures_are_recorded():
    # lam < 0 is rejected inside each replication, not by the harness
    res = run_replications(SMALL, reps=2, params={"lam": -1.0})
    assert res.n_failed == 2 and res.n_ok == 0
    assert "ValidationError" in res.failures()[0][1]
    with pytest.raises(ValidationError):
        run_replications(SMALL, estimators=("ols",))


def test_tested_positions_single_and_network():
    sim = simulate(SMALL)
    np.testing.assert_array_equal(positions_under_test(sim), np.arange(sim.spec.theta1.size))
    net = simulate(DgpConfig("net_yx", n=40, p=5, m=3, seed=2))
    W = net.extra["W"]
    dix = np.asarray(net.spec.meta["delta_index"])
    pos = positions_under_test(net)
    expect = sum(1 for j in range(5) for k in range(5) if j != k and W[j, k] == 0
                 and dix[j, k] >= 0)
    assert pos.size == expect


def test_table_cells():
    assert len(table_cells(1)) == 4
    assert len(table_cells(3)) == 8
    kinds = [c.dgp_kind for c in table_cells(5)]
    assert kinds == ["net_yx", "net_yy"] * 2
    with pytest.raises(ValidationError):
        table_cells(6)


def test_table_one_schema(tmp_path):
    cells = [DgpConfig(p=10, q=20, n=60, rho=r) for r in (0.7, 0.9)]
    results, path = run_table(1, tmp_path, reps=2, seed=1, cells=cells)
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    assert len(rows) == 6
    assert [r["estimator"] for r in rows[:3]] == ["2SLS", "RMD", "DRGMM"]
    assert list(rows[0]) == ["p", "q", "rho", "estimator", "mse_rho", "mean_l2_delta",
                             "median_l2_delta", "reps_ok", "reps_failed"]
    assert rows[0]["mean_l2_delta"] == ""
    assert (tmp_path / "manifest.json").exists()
    again, path2 = run_table(1, tmp_path / "b", reps=2, seed=1, cells=cells)
    assert path2.read_text() == path.read_text()


def test_rows_to_csv_blanks_missing_metrics():
    res = ResultTable(SMALL, [{"rep": 0, "ok": True, "error": "", "drgmm_size": 0.1,
                               "drgmm_power": np.nan}], ("drgmm",))
    text = rows_to_csv(table_rows(5, [res]))
    line = text.splitlines()[1].split(",")
    assert line[3] == "0.10000000000000001"
    assert line[4] == ""
