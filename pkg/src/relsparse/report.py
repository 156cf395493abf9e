"""Selection-diagram CSV, figures and run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .errors import ContractError, RelSparseError, SchemaError

COLUMNS = (
    "gamma",
    "lambda",
    "k",
    "beta",
    "b_k",
    "selected",
    "se_theoretical",
    "se_empirical",
    "value",
    "value_se",
    "converged",
)
BASELINE_COLUMN = "se_baseline"
FLOAT_COLUMNS = {"gamma", "lambda", "beta", "b_k", "se_theoretical", "se_empirical", "value", "value_se", BASELINE_COLUMN}
INT_COLUMNS = {"k", "selected", "converged"}


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def gamma_label(gamma: float) -> str:
    return format(float(gamma), "g")


def diagram_rows(sweep, empirical=None, baseline: bool | None = None) -> list[dict]:
    """Flatten a sweep into CSV records; ``k = 0`` rows carry the value."""
    if not sweep.points:
        raise ContractError("sweep has no grid points")
    if baseline is None:
        baseline = any(p.se_baseline is not None for p in sweep.iter_points())
    rows = []
    for g in sweep.gamma_grid:
        for j, lam in enumerate(sweep.lambda_grids[g]):
            p = sweep.points[(g, j)]
            emp_coef = emp_val = None
            if empirical is not None:
                emp_lams = empirical.lambda_grids.get(g)
                if emp_lams is None or len(emp_lams) != len(sweep.lambda_grids[g]) or not np.array_equal(emp_lams, sweep.lambda_grids[g]):
                    raise ContractError(f"empirical lambda grid for gamma={g} does not match the sweep")
                emp_coef, emp_val = empirical.sd_coef[g][j], empirical.sd_value[g][j]
            row = dict.fromkeys(COLUMNS)
            row.update(gamma=g, **{"lambda": float(lam)}, k=0, converged=p.converged and p.ok,
                       value=p.value if p.ok else None, value_se=p.value_se if p.ok else None,
                       se_empirical=emp_val)
            if baseline:
                row[BASELINE_COLUMN] = None
            rows.append(row)
            for k in range(sweep.K):
                row = dict.fromkeys(COLUMNS)
                row.update(gamma=g, **{"lambda": float(lam)}, k=k + 1, b_k=sweep.b_n[k],
                           converged=p.converged and p.ok,
                           se_empirical=None if emp_coef is None else emp_coef[k])
                if p.ok:
                    row.update(beta=p.beta[k], selected=int(k in p.active),
                               se_theoretical=None if p.se is None else p.se[k])
                if baseline:
                    row[BASELINE_COLUMN] = None if (not p.ok or p.se_baseline is None) else p.se_baseline[k]
                rows.append(row)
    return rows


def write_diagram_csv(rows, path) -> Path:
    path = Path(path)
    columns = list(COLUMNS) + ([BASELINE_COLUMN] if rows and BASELINE_COLUMN in rows[0] else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def read_diagram(path) -> list[dict]:
    """Parse ``diagram.csv`` back into typed records (empty cells become None)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        if header[: len(COLUMNS)] != COLUMNS:
            raise SchemaError(f"{path}: unexpected diagram header {header}")
        rows = []
        for raw in reader:
            row = {}
            for c in header:
                v = raw[c]
                if v == "":
                    row[c] = None
                elif c in INT_COLUMNS:
                    row[c] = int(v)
                else:
                    row[c] = float(v)
            rows.append(row)
    return rows


def merge_empirical(rows, empirical) -> list[dict]:
    """Fill ``se_empirical`` in parsed diagram rows from an EmpiricalResult.

    Grid points are matched by exact (gamma, lambda) values.
    """
    index = {}
    for g in empirical.gamma_grid:
        for j, lam in enumerate(empirical.lambda_grids[g]):
            index[(float(g), float(lam))] = j
    out = []
    for r in rows:
        j = index.get((r["gamma"], r["lambda"]))
        if j is None:
            raise ContractError(f"no replicate results for gamma={r['gamma']}, lambda={r['lambda']}")
        r = dict(r)
        sd = empirical.sd_value[r["gamma"]][j] if r["k"] == 0 else empirical.sd_coef[r["gamma"]][j][r["k"] - 1]
        r["se_empirical"] = None if not np.isfinite(sd) else float(sd)
        out.append(r)
    return out


def write_empirical_csv(empirical, path) -> Path:
    """``gamma,lambda,k,sd,replicates_ok`` with ``k = 0`` for the value."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gamma", "lambda", "k", "sd", "replicates_ok"])
        for g in empirical.gamma_grid:
            for j, lam in enumerate(empirical.lambda_grids[g]):
                counts = empirical.n_success[g][j]
                w.writerow([_fmt(g), _fmt(lam), 0, _fmt(empirical.sd_value[g][j]), int(counts.min())])
                for k, sd in enumerate(empirical.sd_coef[g][j]):
                    w.writerow([_fmt(g), _fmt(lam), k + 1, _fmt(sd), int(counts[k])])
    return path


def lambda_grids_from_rows(rows) -> dict:
    grids: dict = {}
    for r in rows:
        if r["k"] == 0:
            grids.setdefault(r["gamma"], []).append(r["lambda"])
    return {g: np.array(v) for g, v in grids.items()}


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, document: dict, outputs) -> Path:
    doc = dict(document)
    doc["outputs"] = [{"file": Path(p).name, "sha256": sha256(p)} for p in outputs]
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if hasattr(x, "__dataclass_fields__"):
        from dataclasses import asdict

        return _jsonable(asdict(x))
    return x


def render_rows(rows, out_dir, formats=("svg",)) -> list[Path]:
    from .plotting import plot_selection_diagram

    written = []
    for g in sorted({r["gamma"] for r in rows}):
        sub = [r for r in rows if r["gamma"] == g]
        for fmt in formats:
            path = Path(out_dir) / f"diagram_gamma_{gamma_label(g)}.{fmt}"
            plot_selection_diagram(sub, path)
            written.append(path)
    return written


def emit_diagram(sweep, empirical=None, out_dir=".", formats=("csv",), baseline=None, manifest: dict | None = None) -> list[Path]:
    """Write ``diagram.csv`` and/or one figure per gamma, plus ``manifest.json``.

    Returns the list of written files (manifest last).
    """
    formats = tuple(formats)
    unknown = set(formats) - {"csv", "svg", "png"}
    if unknown:
        raise ContractError(f"unsupported output format(s) {sorted(unknown)}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RelSparseError(f"cannot create output directory {out_dir}: {exc}") from None
    rows = diagram_rows(sweep, empirical, baseline)
    written = []
    try:
        if "csv" in formats:
            written.append(write_diagram_csv(rows, out_dir / "diagram.csv"))
        figs = [f for f in formats if f != "csv"]
        if figs:
            written += render_rows(rows, out_dir, figs)
    except OSError as exc:
        raise RelSparseError(f"cannot write to {out_dir}: {exc}") from None
    doc = dict(manifest or {})
    doc.setdefault("metadata", sweep.metadata)
    doc.setdefault("lambda_saturation", {gamma_label(g): v for g, v in sweep.lambda_sat.items()})
    doc.setdefault("failures", [{"gamma": g, "lambda": lam, "error": e} for g, lam, e in sweep.failures()])
    written.append(write_manifest(out_dir, doc, written))
    return written
