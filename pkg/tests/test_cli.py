import csv
import io
import json

import numpy as np
import pytest

from focalgmm import cli
from focalgmm.io import (layout_from_spec, read_json, read_panel_csv, write_json,
                         write_network_csv, write_panel_csv)
from focalgmm.model import NetworkSpec, PanelData, build_spatial_transform

SIM = ["--dgp", "single_eq_iid", "--n", "60", "--p", "10"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def simdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", *SIM, "--seed", 3, "--out", out) == 0
    return out


def test_simulate_outputs(simdir):
    for name in ("panel.csv", "network.csv", "layout.json", "truth.json"):
        assert (simdir / name).exists()
    truth = read_json(simdir / "truth.json")
    assert len(truth["theta0"]) == len(truth["names"]) == 10


def test_estimate_is_byte_identical(simdir, tmp_path):
    for d in ("a", "b"):
        assert run("estimate", "--data", simdir, "--seed", 1, "--out", tmp_path / d) == 0
    a = (tmp_path / "a" / "estimate.json").read_bytes()
    assert a == (tmp_path / "b" / "estimate.json").read_bytes()
    assert (tmp_path / "a" / "timings.json").exists()
    est = json.loads(a)
    assert {"theta_hat", "theta_check1", "lambda", "ell", "bundle"} <= set(est)


def test_huge_lambda_gives_zero(simdir, tmp_path):
    assert run("estimate", "--data", simdir, "--lambda", 1e9, "--out", tmp_path) == 0
    est = read_json(tmp_path / "estimate.json")
    assert est["theta_hat"] == [0.0] * 10
    assert est["lambda"] == 1e9


def test_threads_do_not_change_output(simdir, tmp_path, monkeypatch):
    assert run("estimate", "--data", simdir, "--threads", 1, "--out", tmp_path / "a") == 0
    monkeypatch.setenv("FOCALGMM_THREADS", "3")
    assert cli.resolve_threads(None) == 3
    assert run("estimate", "--data", simdir, "--out", tmp_path / "b") == 0
    assert ((tmp_path / "a" / "estimate.json").read_bytes()
            == (tmp_path / "b" / "estimate.json").read_bytes())
    monkeypatch.setenv("FOCALGMM_THREADS", "many")
    assert run("estimate", "--data", simdir, "--out", tmp_path / "c") == 2


def test_split_and_infer(tmp_path):
    assert run("simulate", *SIM[:2], "--n", 200, "--p", 10, "--out", tmp_path) == 0
    assert run("estimate", "--data", tmp_path, "--split", "--out", tmp_path) == 0
    assert read_json(tmp_path / "estimate.json")["split"] is True
    assert run("infer", "--estimate", tmp_path, "--targets", "rho,delta[0]", "--method",
               "block_bootstrap", "--n-boot", 200, "--block-size", 3, "--out", tmp_path) == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "inference.csv").read_text())))
    assert [r["name"] for r in rows] == ["rho", "delta[0]"]
    rep = read_json(tmp_path / "inference.json")
    assert rep["ci_lower"][0] <= rep["estimate"][0] <= rep["ci_upper"][0]


def test_validation_exit_codes(simdir, tmp_path, capsys):
    assert run("estimate", "--data", tmp_path / "nowhere", "--out", tmp_path) == 2
    assert run("estimate", "--data", simdir, "--lambda", 0.1, "--lambda-method", "cv",
               "--out", tmp_path) == 2
    assert run("estimate", "--data", simdir, "--alpha", 1.5, "--out", tmp_path) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        run("estimate", "--lambda-method", "magic")
    assert exc.value.code == 2


def test_numerical_exit_code(simdir, tmp_path):
    data = read_panel_csv(simdir / "panel.csv")
    z = data.z[0].copy()
    z[:, 3] = 0.0
    write_panel_csv(PanelData(data.y, data.x, [z], data.labels), tmp_path / "panel.csv")
    code = run("estimate", "--panel", tmp_path / "panel.csv", "--network",
               simdir / "network.csv", "--layout", simdir / "layout.json", "--out", tmp_path)
    assert code == 3


def test_bench_schema_and_rerun(tmp_path):
    args = ["bench", "--table", 1, "--reps", 2, "--seed", 1, "--lambda-method", "rate_rule"]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b", "--threads", 2) == 0
    a = (tmp_path / "a" / "table1.csv").read_text()
    assert a == (tmp_path / "b" / "table1.csv").read_text()
    rows = list(csv.DictReader(io.StringIO(a)))
    assert len(rows) == 12
    assert {r["estimator"] for r in rows} == {"2SLS", "RMD", "DRGMM"}


def test_bench_partial_exit_code(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.BENCH_PARAMS, "lam", -1.0)
    monkeypatch.setitem(cli.BENCH_PARAMS, "lambda_method", "fixed")
    assert run("bench", "--table", 1, "--reps", 1, "--out", tmp_path) == 4


def _net_yy_dir(tmp_path, planted):
    d = tmp_path / "net"
    assert run("simulate", "--dgp", "net_yy", "--n", 100, "--p", 6, "--m", 3, "--rho", 0.5,
               "--misspec", 0.0, "--planted", planted, "--seed", 2, "--out", d) == 0
    return d


def test_recover_header_only_without_rejections(tmp_path):
    d = _net_yy_dir(tmp_path, 0)
    assert run("estimate", "--data", d, "--out", tmp_path) == 0
    # alpha close to zero makes the intervals too wide to reject anything
    assert run("infer", "--estimate", tmp_path, "--alpha", 1e-12, "--out", tmp_path) == 0
    assert run("recover", "--estimate", tmp_path, "--inference", tmp_path, "--data", d,
               "--out", tmp_path) == 0
    assert (tmp_path / "edges.csv").read_text() == "from,to,delta_hat,ci_lo,ci_hi,significant\n"


def test_recover_planted_edge(tmp_path):
    d = _net_yy_dir(tmp_path, 1)
    planted = [tuple(e) for e in read_json(d / "truth.json")["planted"]]
    assert run("estimate", "--data", d, "--out", tmp_path) == 0
    assert run("infer", "--estimate", tmp_path, "--out", tmp_path) == 0
    assert run("recover", "--estimate", tmp_path, "--inference", tmp_path, "--data", d,
               "--out", tmp_path) == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "edges.csv").read_text())))
    labels = read_panel_csv(d / "panel.csv").labels
    found = {(labels.index(r["to"]), labels.index(r["from"])) for r in rows}
    assert set(planted) <= found
    rep = read_json(tmp_path / "inference.json")
    assert len(rows) <= sum(rep["reject"])
    assert run("recover", "--estimate", tmp_path, "--inference", tmp_path, "--data", d,
               "--all", "--out", tmp_path / "all") == 0
    assert len((tmp_path / "all" / "edges.csv").read_text().splitlines()) - 1 >= len(rows)


def test_lagged_returns_as_instruments(tmp_path):
    # returns with an own-lag covariate, instrumented by r_{t-1} and r_{t-2}; each unit
    # lists its own lag first so the pooled step compares like with like
    rng = np.random.default_rng(5)
    p, n, rho, phi = 4, 400, 0.4, 0.5
    W = np.array([[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0]], float)
    S = np.linalg.inv(np.eye(p) - rho * W)
    r = np.zeros((n + 2, p))
    for t in range(1, n + 2):
        r[t] = S @ (phi * r[t - 1] + rng.normal(size=p))
    y, lag1, lag2 = r[2:], r[1:-1], r[:-2]
    data = PanelData(y, [np.hstack([y, lag1[:, [j]]]) for j in range(p)],
                     [np.hstack([np.roll(lag1, -j, 1), np.roll(lag2, -j, 1)]) for j in range(p)])
    spec = build_spatial_transform(NetworkSpec(W, (0, 1)), n_exog=1, exclude_self=True)
    write_panel_csv(data, tmp_path / "panel.csv")
    write_network_csv(W, tmp_path / "network.csv")
    write_json(layout_from_spec(spec), tmp_path / "layout.json")
    assert run("estimate", "--data", tmp_path, "--common-params", "--out", tmp_path) == 0
    est = read_json(tmp_path / "estimate.json")
    names = est["names"]
    theta = dict(zip(names, est["theta_check"]))
    assert theta["rho"] == pytest.approx(rho, abs=0.15)
    assert theta["gamma[0]"] == pytest.approx(phi, abs=0.15)
    assert run("infer", "--estimate", tmp_path, "--out", tmp_path) == 0


def test_diagnose_matrix(tmp_path, capsys):
    write_network_csv(np.diag([3.0, 2.0, 1.0]), tmp_path / "g.csv")
    write_network_csv(np.eye(3), tmp_path / "b.csv")
    assert run("diagnose", "--matrix", tmp_path / "g.csv", "--basis", tmp_path / "b.csv",
               "--m", 1, "--s", 1, "--out", tmp_path) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["sparse_singular_values"]["sigma_min_m"] == 1.0
    assert rep["rip"]["sigma_max"] == 3.0
    assert run("diagnose", "--matrix", tmp_path / "g.csv", "--m", 3, "--cap", 2) == 2


def test_diagnose_panel(simdir, capsys):
    assert run("diagnose", "--data", simdir, "--m", 1, "--s", 1, "--cap", 10 ** 4) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["shape"] == [20, 10]
