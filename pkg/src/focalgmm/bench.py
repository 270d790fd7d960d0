"""Monte Carlo replication harness and the table layouts of the simulation study.

Replications are independent given ``(seed, rep)`` and are reduced in rep
order, so tables do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import subprocess
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._validation import ValidationError
from .dgp import DgpConfig, SimulatedData, simulate, two_stage_least_squares
from .estimator import DRGMM
from .io import fmt, write_json

__all__ = [
    "ESTIMATORS",
    "TABLES",
    "ResultTable",
    "tested_positions",
    "replicate",
    "run_replications",
    "table_cells",
    "table_rows",
    "run_table",
]

ESTIMATORS = ("2sls", "rmd", "drgmm")

# default DRGMM settings for the Monte Carlo study
BENCH_PARAMS = {"lambda_method": "cv", "backend": "highs"}


def tested_positions(sim: SimulatedData) -> np.ndarray:
    """Positions within ``theta1`` whose zero hypothesis enters size and power.

    Single equation: every target.  Network designs: deviations on pairs
    with ``w_{jk} = 0``, the only place a latent link can hide.
    """
    spec = sim.spec
    if spec.meta.get("kind") == "single":
        return np.arange(spec.theta1.size)
    pos = {int(g): i for i, g in enumerate(spec.theta1)}
    W = sim.extra["W"]
    dix = np.asarray(spec.meta["delta_index"])
    out = [pos[int(dix[j, k])] for j, k in zip(*np.nonzero(dix >= 0))
           if W[j, k] == 0 and j != k and int(dix[j, k]) in pos]
    return np.asarray(sorted(out), dtype=int)


def _coords(spec, prefix):
    return np.asarray([i for i, nm in enumerate(spec.names) if nm.startswith(prefix)], dtype=int)


def _delta_coords(sim):
    d = _coords(sim.spec, "delta")
    if sim.spec.meta.get("kind") == "single":
        d = np.intersect1d(d, sim.spec.theta1)
    return d


def _tsls_rho(sim: SimulatedData) -> float:
    # y on w'x with the first instrument as the only instrument
    data = sim.data
    w = np.asarray(sim.spec.meta["w"])
    wx = data.x[0][:, : w.size] @ w
    return float(two_stage_least_squares(data.y[:, 0], wx, data.z[0][:, :1])[0])


def replicate(cfg: DgpConfig, rep: int, params: dict = None,
              estimators=ESTIMATORS) -> dict:
    """One replication: simulate, fit, and collect per-estimator errors and decisions."""
    params = dict(BENCH_PARAMS if params is None else params)
    sim = simulate(cfg, rep)
    spec = sim.spec
    out = {"rep": rep, "ok": True, "error": ""}
    rho_i = spec.meta["rho_index"]
    rho0 = float(sim.theta0[rho_i])
    single = spec.meta.get("kind") == "single"
    if "2sls" in estimators and single:
        out["2sls_rho_sq"] = (_tsls_rho(sim) - rho0) ** 2
    if not {"rmd", "drgmm"} & set(estimators):
        return out
    est = DRGMM(**params).fit(sim.data, spec)
    delta, gamma = _delta_coords(sim), _coords(spec, "gamma")
    tested = tested_positions(sim)
    truth1 = sim.theta0[spec.theta1][tested]
    null = truth1 == 0
    fits = {"rmd": est.theta_hat_, "drgmm": est.coef_}
    for name in ("rmd", "drgmm"):
        if name not in estimators:
            continue
        th = fits[name]
        out[f"{name}_rho_sq"] = (float(th[rho_i]) - rho0) ** 2
        out[f"{name}_l2_delta"] = float(np.linalg.norm(th[delta] - sim.theta0[delta]))
        if gamma.size:
            out[f"{name}_l2_gamma"] = float(np.linalg.norm(th[gamma] - sim.theta0[gamma]))
    if "rmd" in estimators:
        sel = est.theta_hat_[spec.theta1][tested] != 0
        out["rmd_fp"] = float(sel[null].mean()) if null.any() else np.nan
    if "drgmm" in estimators:
        rej = est.infer().reject[tested]
        out["drgmm_size"] = float(rej[null].mean()) if null.any() else np.nan
        out["drgmm_power"] = float(rej[~null].mean()) if (~null).any() else np.nan
        out["lambda"] = est.lam_
    return out


def _safe_replicate(args):
    cfg, rep, params, estimators = args
    try:
        return replicate(cfg, rep, params, estimators)
    except Exception as exc:  # recorded per replication, never fatal
        return {"rep": rep, "ok": False, "error": f"{type(exc).__name__}: {exc}",
                "trace": traceback.format_exc(limit=3)}


@dataclass
class ResultTable:
    """Per-replication records of one design cell and their summaries."""

    cfg: DgpConfig
    records: list
    estimators: tuple = ESTIMATORS
    params: dict = field(default_factory=dict)

    @property
    def n_ok(self) -> int:
        return sum(r["ok"] for r in self.records)

    @property
    def n_failed(self) -> int:
        return len(self.records) - self.n_ok

    def values(self, key: str) -> np.ndarray:
        v = [r[key] for r in self.records if r["ok"] and key in r]
        return np.asarray(v, dtype=float)

    def _mean(self, key):
        v = self.values(key)
        v = v[~np.isnan(v)]
        return float(v.mean()) if v.size else np.nan

    def _median(self, key):
        v = self.values(key)
        v = v[~np.isnan(v)]
        return float(np.median(v)) if v.size else np.nan

    def summary(self) -> dict:
        """``{estimator: {metric: value}}``; size and power average the per-rep rates."""
        out = {}
        for e in self.estimators:
            m = {"mse_rho": self._mean(f"{e}_rho_sq")}
            if e != "2sls":
                m["mean_l2_delta"] = self._mean(f"{e}_l2_delta")
                m["median_l2_delta"] = self._median(f"{e}_l2_delta")
                m["mean_l2_gamma"] = self._mean(f"{e}_l2_gamma")
                m["median_l2_gamma"] = self._median(f"{e}_l2_gamma")
            if e == "rmd":
                m["size"] = self._mean("rmd_fp")
            if e == "drgmm":
                m["size"] = self._mean("drgmm_size")
                m["power"] = self._mean("drgmm_power")
            out[e] = m
        return out

    def failures(self) -> list:
        return [(r["rep"], r["error"]) for r in self.records if not r["ok"]]


def run_replications(cfg: DgpConfig, estimators=ESTIMATORS, params: dict = None,
                     threads: int = 1, reps: int = None) -> ResultTable:
    """Run ``reps`` (default ``cfg.reps``) replications of one design cell."""
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        raise ValidationError(f"unknown estimators {sorted(unknown)}")
    reps = cfg.reps if reps is None else reps
    if reps < 1:
        raise ValidationError("reps must be >= 1")
    params = dict(BENCH_PARAMS if params is None else params)
    jobs = [(cfg, rep, params, tuple(estimators)) for rep in range(reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_safe_replicate, jobs))
    else:
        records = [_safe_replicate(j) for j in jobs]
    records.sort(key=lambda r: r["rep"])
    return ResultTable(cfg, records, tuple(estimators), params)


# ------------------------------------------------------------------- tables

TABLES = {
    1: "estimation, single equation, iid instruments",
    2: "size and power, single equation, iid instruments",
    3: "estimation and inference, dependent instruments",
    4: "estimation, network designs",
    5: "inference on latent links, network designs",
}

_SINGLE_CELLS = [(100, 200, 0.7), (100, 200, 0.9), (120, 240, 0.7), (120, 240, 0.9)]


def table_cells(table: int, seed: int = 0, reps: int = 100, p_net: int = 10,
                m_net: int = 10) -> list[DgpConfig]:
    """Design cells of a table, in row order."""
    if table in (1, 2):
        return [DgpConfig("single_eq_iid", p=p, q=q, rho=r, seed=seed, reps=reps)
                for p, q, r in _SINGLE_CELLS]
    if table == 3:
        return [DgpConfig("single_eq_dependent", p=p, q=q, rho=r, tau=tau, seed=seed, reps=reps)
                for tau in (1.0, 0.1) for p, q, r in _SINGLE_CELLS]
    if table in (4, 5):
        return [DgpConfig(kind, p=p_net, m=m_net, rho=r, seed=seed, reps=reps)
                for r in (0.5, 0.7) for kind in ("net_yx", "net_yy")]
    raise ValidationError(f"table must be one of {sorted(TABLES)}")


_COLUMNS = {
    1: ["p", "q", "rho", "estimator", "mse_rho", "mean_l2_delta", "median_l2_delta"],
    2: ["p", "q", "rho", "estimator", "size", "power"],
    3: ["tau", "p", "q", "rho", "estimator", "mse_rho", "mean_l2_delta", "median_l2_delta",
        "size", "power"],
    4: ["dgp", "rho", "estimator", "mse_rho", "mean_l2_gamma", "median_l2_gamma",
        "mean_l2_delta", "median_l2_delta"],
    5: ["dgp", "rho", "estimator", "size", "power"],
}
_ROW_ESTIMATORS = {1: ESTIMATORS, 2: ("drgmm", "rmd"), 3: ESTIMATORS, 4: ("rmd", "drgmm"),
                   5: ("drgmm",)}


def table_rows(table: int, results: list[ResultTable]) -> list[dict]:
    """Rows of ``tableN.csv``; metrics that do not apply to an estimator stay empty."""
    cols = _COLUMNS[table]
    rows = []
    for res in results:
        cfg = res.cfg
        summ = res.summary()
        for e in _ROW_ESTIMATORS[table]:
            row = {"dgp": cfg.dgp_kind, "tau": cfg.tau, "p": cfg.p, "q": cfg.q, "rho": cfg.rho,
                   "estimator": e.upper()}
            row.update(summ.get(e, {}))
            out = {c: row.get(c, "") for c in cols}
            out["reps_ok"] = res.n_ok
            out["reps_failed"] = res.n_failed
            rows.append(out)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.writer(buf, lineterminator="\n")
    keys = list(rows[0])
    w.writerow(keys)
    for r in rows:
        cells = []
        for k in keys:
            v = r[k]
            if isinstance(v, str):
                cells.append(v)
            elif v is None or (isinstance(v, float) and np.isnan(v)):
                cells.append("")
            else:
                cells.append(fmt(v))
        w.writerow(cells)
    return buf.getvalue()


def _git_describe() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=10,
                             cwd=Path(__file__).resolve().parent)
        return res.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def run_table(table: int, out_dir, reps: int = 100, seed: int = 0, params: dict = None,
              threads: int = 1, cells: list[DgpConfig] = None) -> tuple[list[ResultTable], Path]:
    """Run every cell of ``table``, write ``tableN.csv`` and ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = cells or table_cells(table, seed, reps)
    estimators = ("2sls", "rmd", "drgmm") if table in (1, 3) else ("rmd", "drgmm")
    params = dict(BENCH_PARAMS if params is None else params)
    results = [run_replications(replace(c, reps=reps, seed=seed), estimators, params, threads)
               for c in cells]
    path = out_dir / f"table{table}.csv"
    path.write_text(rows_to_csv(table_rows(table, results)))
    manifest = {
        "table": table, "title": TABLES[table], "seed": seed, "reps": reps,
        "estimator_params": params, "build": _git_describe(),
        "cells": [c.to_dict() for c in cells],
        "failures": {str(i): res.failures() for i, res in enumerate(results) if res.n_failed},
    }
    write_json(manifest, out_dir / "manifest.json")
    return results, path
