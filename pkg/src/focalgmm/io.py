"""Plain-text formats: long panel CSV, dense network CSV, layout and result JSON.

Every float is written with 17 significant digits so a file read back
reproduces the in-memory value bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ._validation import ValidationError
from .model import (NetworkSpec, PanelData, TransformSpec, build_lagged_transform,
                    build_spatial_transform, build_spillover_transform,
                    single_equation_transform)

__all__ = [
    "fmt",
    "dumps",
    "write_json",
    "read_json",
    "write_panel_csv",
    "read_panel_csv",
    "write_network_csv",
    "read_network_csv",
    "layout_from_spec",
    "spec_from_layout",
]

MODELS = ("single", "spillover", "spatial", "lagged")


def fmt(v) -> str:
    """17-significant-digit text for a float; integers and bools pass through."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 1) -> str:
    """JSON text with 17-digit floats and deterministic layout."""
    return _encode(obj, indent, 0) + "\n"


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}: {exc.msg}") from None


# ---------------------------------------------------------------- panel CSV

def write_panel_csv(data: PanelData, path) -> Path:
    """Long format ``t,unit,y,x_1..x_K,z_1..z_q``; short units leave trailing cells empty."""
    kx = max(a.shape[1] for a in data.x)
    kz = max(a.shape[1] for a in data.z)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "unit", "y"] + [f"x_{i + 1}" for i in range(kx)]
                   + [f"z_{i + 1}" for i in range(kz)])
        for t in range(data.n):
            for j in range(data.p):
                xs = [fmt(v) for v in data.x[j][t]] + [""] * (kx - data.x[j].shape[1])
                zs = [fmt(v) for v in data.z[j][t]] + [""] * (kz - data.z[j].shape[1])
                w.writerow([t, data.labels[j], fmt(data.y[t, j])] + xs + zs)
    return path


def _cells(row, cols, lineno, kind):
    vals = []
    for c in cols:
        cell = row[c].strip() if c < len(row) else ""
        vals.append(cell)
    while vals and vals[-1] == "":
        vals.pop()
    if "" in vals:
        raise ValidationError(f"line {lineno}: missing {kind} value inside the row")
    try:
        return [float(v) for v in vals]
    except ValueError as exc:
        raise ValidationError(f"line {lineno}: {exc}") from None


def read_panel_csv(path) -> PanelData:
    """Inverse of :func:`write_panel_csv`.

    Units keep the order of first appearance.  The panel must be balanced
    and a unit's covariate and instrument counts must not change over time;
    violations are reported with the offending line number.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if header[:3] != ["t", "unit", "y"]:
            raise ValidationError(f"{path}: line 1: header must start with t,unit,y")
        xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
        zcols = [i for i, h in enumerate(header) if h.startswith("z_")]
        if not xcols or not zcols:
            raise ValidationError(f"{path}: line 1: need x_ and z_ columns")
        records = {}
        units, times = [], []
        shapes = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                t = int(row[0])
                y = float(row[2])
            except (ValueError, IndexError):
                raise ValidationError(f"{path}: line {lineno}: bad t or y value") from None
            unit = row[1].strip()
            x = _cells(row, xcols, lineno, "x")
            z = _cells(row, zcols, lineno, "z")
            if unit not in shapes:
                shapes[unit] = (len(x), len(z))
                units.append(unit)
            elif shapes[unit] != (len(x), len(z)):
                raise ValidationError(f"{path}: line {lineno}: unit {unit!r} changes its "
                                      "number of covariates or instruments")
            if (t, unit) in records:
                raise ValidationError(f"{path}: line {lineno}: duplicate (t={t}, unit={unit})")
            if t not in times:
                times.append(t)
            records[(t, unit)] = (y, x, z)
    times.sort()
    missing = [(t, u) for t in times for u in units if (t, u) not in records]
    if missing:
        t, u = missing[0]
        raise ValidationError(f"{path}: unbalanced panel, no row for t={t}, unit={u!r}")
    y = np.array([[records[(t, u)][0] for u in units] for t in times])
    x = [np.array([records[(t, u)][1] for t in times]) for u in units]
    z = [np.array([records[(t, u)][2] for t in times]) for u in units]
    return PanelData(y, x, z, units)


# -------------------------------------------------------------- network CSV

def write_network_csv(W, path) -> Path:
    W = np.atleast_2d(np.asarray(W, dtype=float))
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in W:
            w.writerow([fmt(v) for v in row])
    return path


def read_network_csv(path) -> np.ndarray:
    """Dense header-free matrix; a single row is allowed for the single-equation model."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: file not found")
    rows = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from None
            if len(rows[-1]) != len(rows[0]):
                raise ValidationError(f"{path}: line {lineno}: expected {len(rows[0])} entries")
    if not rows:
        raise ValidationError(f"{path}: empty network file")
    W = np.array(rows)
    if not np.all(np.isfinite(W)):
        raise ValidationError(f"{path}: non-finite network entries")
    return W


# ------------------------------------------------------------------- layout

def layout_from_spec(spec: TransformSpec, **extra) -> dict:
    """Layout JSON payload: model kind and build options plus names and the partition."""
    meta = spec.meta
    kind = meta.get("kind")
    out = {"model": kind}
    if kind in ("single", "spillover", "spatial"):
        out["anchor"] = meta.get("anchor")
    out["n_exog"] = int(meta.get("n_exog", 0))
    if kind == "spatial":
        out["exclude_self"] = bool(meta.get("exclude_self", False))
    out.update(spec.layout())
    out.update(extra)
    return out


def spec_from_layout(layout: dict, W) -> TransformSpec:
    """Rebuild the transform named in ``layout`` on the network ``W``.

    The stored coordinate names must match the rebuilt ones; the stored
    ``theta1`` partition (indices or names) replaces the builder default.
    """
    kind = layout.get("model")
    if kind not in MODELS:
        raise ValidationError(f"layout model must be one of {MODELS}, got {kind!r}")
    W = np.atleast_2d(np.asarray(W, dtype=float))
    n_exog = int(layout.get("n_exog", 0))
    anchor = layout.get("anchor")
    if kind == "single":
        if W.shape[0] != 1:
            raise ValidationError("the single-equation model expects a one-row network file")
        spec = single_equation_transform(W[0], anchor, n_exog)
    else:
        net = NetworkSpec(W, tuple(anchor) if anchor is not None else None,
                          zero_diag=kind != "lagged")
        if kind == "spillover":
            spec = build_spillover_transform(net, n_exog=n_exog)
        elif kind == "spatial":
            spec = build_spatial_transform(net, n_exog, bool(layout.get("exclude_self", False)))
        else:
            spec = build_lagged_transform(net)
    names = layout.get("names")
    if names is not None and list(names) != list(spec.names):
        raise ValidationError("layout names do not match the network; "
                              f"expected {len(spec.names)} coordinates, got {len(names)}")
    theta1 = layout.get("theta1")
    if theta1 is not None:
        lookup = {nm: i for i, nm in enumerate(spec.names)}
        idx = []
        for v in theta1:
            if isinstance(v, str):
                if v not in lookup:
                    raise ValidationError(f"unknown coordinate {v!r} in theta1")
                idx.append(lookup[v])
            else:
                idx.append(int(v))
        spec = spec.with_theta1(np.asarray(idx, dtype=int))
    return spec
