"""Command line interface: ``focalgmm {simulate,estimate,infer,recover,bench,diagnose}``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure (singular
system, infeasible LP), 4 benchmark finished with failed replications.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from ._validation import NumericalError, ValidationError
from .bench import BENCH_PARAMS, TABLES, run_table
from .debias import EstimateBundle, reestimate_common
from .dgp import KINDS, DgpConfig, simulate
from .diagnostics import kappa_lower_bound, rip_check, sparse_singular_values
from .estimator import DRGMM
from .inference import InferenceConfig, InferenceReport, infer
from .io import (dumps, fmt, layout_from_spec, read_json, read_network_csv, read_panel_csv,
                 spec_from_layout, write_json, write_network_csv, write_panel_csv)
from .model import assemble_linear_moments
from .splitting import split_estimate

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4


def resolve_threads(value) -> int:
    """``--threads`` if given, else ``FOCALGMM_THREADS``, else 1."""
    if value is None:
        env = os.environ.get("FOCALGMM_THREADS", "").strip()
        if not env:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ValidationError(f"FOCALGMM_THREADS must be an integer, got {env!r}") from None
    if value < 1:
        raise ValidationError(f"threads must be >= 1, got {value}")
    return int(value)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _inputs(args):
    base = Path(args.data) if args.data else None

    def pick(value, default):
        if value:
            return Path(value)
        if base is None:
            raise ValidationError(f"missing input: pass --{default.split('.')[0]} or --data")
        return base / default

    panel, network, layout = (pick(args.panel, "panel.csv"), pick(args.network, "network.csv"),
                              pick(args.layout, "layout.json"))
    for p in (panel, network, layout):
        if not p.exists():
            raise ValidationError(f"{p}: file not found")
    return panel, network, layout


def _load(args):
    panel, network, layout = _inputs(args)
    data = read_panel_csv(panel)
    W = read_network_csv(network)
    spec = spec_from_layout(read_json(layout), W)
    return data, W, spec


def _estimator(args) -> DRGMM:
    kw = dict(BENCH_PARAMS)
    if args.lambda_method:
        kw["lambda_method"] = args.lambda_method
    kw.update(lam=args.lam, ell=args.ell, alpha=args.alpha, seed=args.seed,
              n_jobs=resolve_threads(args.threads))
    if getattr(args, "method", None):
        kw["method"] = args.method
    if getattr(args, "n_boot", None):
        kw["n_boot"] = args.n_boot
    if getattr(args, "block_size", None):
        kw["block_size"] = args.block_size
    return DRGMM(**kw)


# ----------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    cfg = DgpConfig(args.dgp, n=args.n, p=args.p, q=args.q if args.q else 2 * args.p,
                    m=args.m, rho=args.rho, tau=args.tau, P_misspec=args.misspec,
                    planted=args.planted, seed=args.seed, reps=max(1, args.rep + 1))
    sim = simulate(cfg, args.rep)
    out = _out_dir(args)
    write_panel_csv(sim.data, out / "panel.csv")
    if sim.spec.meta.get("kind") == "single":
        write_network_csv(np.asarray(sim.spec.meta["w"])[None, :], out / "network.csv")
    else:
        write_network_csv(sim.network.W, out / "network.csv")
    write_json(layout_from_spec(sim.spec), out / "layout.json")
    truth = {"config": cfg.to_dict(), "rep": args.rep, "names": sim.spec.names,
             "theta0": sim.theta0}
    if "H" in sim.extra:
        truth["H"] = sim.extra["H"]
        truth["planted"] = [list(e) for e in sim.extra.get("planted", [])]
    write_json(truth, out / "truth.json")
    print(dumps({"out": str(out), "n": sim.data.n, "p": sim.data.p, "K": sim.spec.K}), end="")
    return EXIT_OK


def cmd_estimate(args) -> int:
    data, W, spec = _load(args)
    est = _estimator(args)
    t0 = time.perf_counter()
    est.fit(data, spec)
    res = est.result_
    theta_check1 = est.theta_check1_
    payload = {"names": spec.names, "theta1": spec.theta1.tolist(), "n": data.n,
               "lambda": res.lam, "ell": res.ell, "threshold": res.threshold,
               "escalations": res.escalations, "split": bool(args.split)}
    if args.split:
        sp = split_estimate(data, spec, *est._configs(), threshold_c=est.threshold_c,
                            threshold_scale=est.threshold_scale)
        theta_check1 = sp.theta1
        payload["split_residual"] = sp.residual()
    theta_check = est.theta_hat_.copy()
    theta_check[spec.theta1] = theta_check1
    if args.common_params:
        widths = {z.shape[1] for z in data.z}
        if len(widths) != 1:
            raise ValidationError("--common-params needs the same instrument count in every unit")
        if spec.theta2.size:
            theta2 = reestimate_common(theta_check1, data, spec, data.z)
            theta_check[spec.theta2] = theta2
            payload["theta_check2"] = theta2
    payload["theta_hat"] = est.theta_hat_
    payload["theta_check1"] = theta_check1
    payload["theta_check"] = theta_check
    bundle = est.bundle_.to_dict()
    bundle["theta_check1"] = list(map(float, theta_check1))
    payload["bundle"] = bundle
    out = _out_dir(args)
    write_json(payload, out / "estimate.json")
    # timings live beside the estimate so estimate.json stays reproducible
    timings = dict(res.timings)
    timings["total"] = time.perf_counter() - t0
    write_json(timings, out / "timings.json")
    print(dumps({"estimate": str(out / "estimate.json"), "lambda": res.lam,
                 "nonzero": int(np.count_nonzero(est.theta_hat_))}), end="")
    return EXIT_OK


def _load_estimate(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "estimate.json"
    d = read_json(path)
    for key in ("bundle", "names", "theta1"):
        if key not in d:
            raise ValidationError(f"{path}: not an estimate file (missing {key!r})")
    return d


def _parse_S(text, d):
    if not text:
        return None
    names = d["names"]
    t1 = d["theta1"]
    pos = {names[g]: i for i, g in enumerate(t1)}
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok in pos:
            out.append(pos[tok])
        else:
            try:
                out.append(int(tok))
            except ValueError:
                raise ValidationError(f"unknown target {tok!r} in --targets") from None
    return out


def cmd_infer(args) -> int:
    d = _load_estimate(args.estimate)
    bundle = EstimateBundle.from_dict(d["bundle"])
    cfg = InferenceConfig(alpha=args.alpha, S=_parse_S(args.targets, d),
                          method=args.method or "gaussian_max",
                          n_boot=args.n_boot or 1000, block_size=args.block_size, seed=args.seed,
                          individual=not args.simultaneous)
    names = [d["names"][g] for g in d["theta1"]]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = infer(bundle, cfg, names)
    for w in caught:
        msg = str(w.message)
        if msg not in report.warnings:
            report.warnings.append(msg)
    out = _out_dir(args)
    write_json(report.to_dict(), out / "inference.json")
    (out / "inference.csv").write_text(report.to_csv())
    print(dumps({"inference": str(out / "inference.json"),
                 "rejections": int(report.reject.sum()), "tested": int(report.S.size)}), end="")
    return EXIT_OK


def cmd_recover(args) -> int:
    d = _load_estimate(args.estimate)
    rpath = Path(args.inference)
    if rpath.is_dir():
        rpath = rpath / "inference.json"
    report = InferenceReport.from_dict(read_json(rpath))
    panel, network, layout = _inputs(args) if (args.data or args.network) else (None, None, None)
    if network is None:
        raise ValidationError("recover needs the network (pass --network or --data)")
    W = read_network_csv(network)
    spec = spec_from_layout(read_json(layout), W)
    if list(spec.names) != list(d["names"]):
        raise ValidationError("estimate and layout describe different parameters")
    t1 = np.asarray(d["theta1"], dtype=int)
    by_global = {int(t1[s]): r for r, s in enumerate(report.S)}
    dix = spec.meta.get("delta_index")
    if dix is None:
        raise ValidationError("the layout has no deviation coordinates")
    dix = np.atleast_2d(np.asarray(dix))
    if spec.meta.get("kind") == "single":
        W = np.atleast_2d(W)
    rows = []
    for j in range(dix.shape[0]):
        for k in range(dix.shape[1]):
            g = int(dix[j, k])
            if g < 0 or W[j, k] != 0 or g not in by_global:
                continue
            r = by_global[g]
            rows.append((j, k, report.estimate[r], report.ci_lower[r], report.ci_upper[r],
                         bool(report.reject[r])))
    if not args.all:
        rows = [row for row in rows if row[5]]
    out = _out_dir(args)
    labels = None
    if panel is not None and panel.exists() and spec.meta.get("kind") != "single":
        labels = read_panel_csv(panel).labels
    with (out / "edges.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to", "delta_hat", "ci_lo", "ci_hi", "significant"])
        for j, k, est, lo, hi, sig in rows:
            # delta_{j,k} is the effect of unit k on unit j
            src, dst = (labels[k], labels[j]) if labels else (k, j)
            w.writerow([src, dst, fmt(est), fmt(lo), fmt(hi), int(sig)])
    print(dumps({"edges": str(out / "edges.csv"), "count": sum(r[5] for r in rows)}), end="")
    return EXIT_OK


def cmd_bench(args) -> int:
    params = dict(BENCH_PARAMS)
    if args.lambda_method:
        params["lambda_method"] = args.lambda_method
    for key, val in (("lam", args.lam), ("ell", args.ell), ("method", args.method),
                     ("n_boot", args.n_boot), ("block_size", args.block_size)):
        if val is not None:
            params[key] = val
    params["alpha"] = args.alpha
    params["seed"] = args.seed
    results, path = run_table(args.table, _out_dir(args), reps=args.reps, seed=args.seed,
                              params=params, threads=resolve_threads(args.threads))
    failed = sum(r.n_failed for r in results)
    print(dumps({"table": str(path), "failed_replications": failed}), end="")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_diagnose(args) -> int:
    if args.matrix:
        G = read_network_csv(args.matrix)
    else:
        data, _, spec = _load(args)
        G = assemble_linear_moments(data, spec).G_hat
    report = {"shape": list(G.shape)}
    report["sparse_singular_values"] = sparse_singular_values(G, args.m, cap=args.cap).to_dict()
    report["kappa"] = kappa_lower_bound(G, args.s, args.u, cap=args.cap, seed=args.seed)
    if args.basis:
        B = read_network_csv(args.basis)
        report["rip"] = rip_check(G, B, args.s, cap=args.cap).to_dict()
    text = dumps(report)
    if args.out:
        out = _out_dir(args)
        (out / "diagnostics.json").write_text(text)
    print(text, end="")
    return EXIT_OK


# ------------------------------------------------------------------ parsing

def _add_common(p, out_default="."):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker count (default: $FOCALGMM_THREADS or 1)")
    p.add_argument("--out", default=out_default, help="output directory")


def _add_inputs(p):
    p.add_argument("--data", help="directory holding panel.csv, network.csv and layout.json")
    p.add_argument("--panel")
    p.add_argument("--network")
    p.add_argument("--layout")


def _add_fit(p):
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--lambda-method", choices=["rate_rule", "score_bootstrap", "cv", "fixed"],
                   default=None)
    p.add_argument("--ell", type=float, default=None)
    p.add_argument("--alpha", type=float, default=0.05)


def _add_infer(p):
    p.add_argument("--method", choices=["gaussian_max", "block_bootstrap"], default=None)
    p.add_argument("--block-size", type=int, default=None)
    p.add_argument("--n-boot", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="focalgmm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw one replication of a simulation design")
    p.add_argument("--dgp", choices=KINDS, default="single_eq_iid")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--rho", type=float, default=0.7)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--misspec", type=float, default=0.2)
    p.add_argument("--planted", type=int, default=0)
    p.add_argument("--rep", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="first stage and debiasing")
    _add_inputs(p)
    _add_fit(p)
    p.add_argument("--split", action="store_true", help="two-fold cross-fitted estimate")
    p.add_argument("--common-params", action="store_true",
                   help="re-estimate the nuisance block by pooled 2SLS")
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("infer", help="confidence intervals and tests")
    p.add_argument("--estimate", required=True, help="estimate.json or its directory")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--targets", default=None, help="comma-separated names or positions")
    p.add_argument("--simultaneous", action="store_true")
    _add_infer(p)
    _add_common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("recover", help="latent links with significant deviations")
    p.add_argument("--estimate", required=True)
    p.add_argument("--inference", required=True)
    p.add_argument("--all", action="store_true", help="list every tested pair")
    _add_inputs(p)
    _add_common(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("bench", help="Monte Carlo tables")
    p.add_argument("--table", type=int, choices=sorted(TABLES), required=True)
    p.add_argument("--reps", type=int, default=100)
    _add_fit(p)
    _add_infer(p)
    _add_common(p, out_default="bench_out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("diagnose", help="sparse singular values, RIP and kappa checks")
    p.add_argument("--matrix", help="CSV matrix to analyse instead of the panel gradient")
    p.add_argument("--basis", help="CSV matrix B for the RIP check")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--u", type=float, default=1.0)
    p.add_argument("--cap", type=int, default=10 ** 6)
    _add_inputs(p)
    _add_common(p, out_default=None)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "lam", None) is not None and getattr(args, "lambda_method", None) \
                not in (None, "fixed"):
            raise ValidationError("--lambda fixes the tuning parameter; drop --lambda-method")
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
