"""Results-directory persistence.

Layout written by ``write_run``::

    <out>/config.json          canonical configuration
    <out>/report.json          ensemble report (schema: schemas/report.schema.json)
    <out>/timing.json          wall time, kept apart so the report is reproducible
    <out>/paths/<i>.csv        t, l2, h1, energy, sphere[, M_0 ... M_k]
    <out>/fields/<i>/<step>.csv  optional snapshots: x[, y], u1, u2, u3

CSV files follow RFC 4180 (CRLF line ends) with doubles printed to 17
significant digits, which round-trips exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .ensemble import SERIES_COLUMNS


def clean(obj):
    """JSON-ready copy: numpy scalars unwrapped, non-finite floats as ``null``."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj):
    return json.dumps(clean(obj), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8")


def fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path):
    """Header and float rows of a CSV written by ``write_csv``."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, np.array([[float(v) for v in row] for row in r])


def series_header(result):
    head = list(SERIES_COLUMNS)
    width = next((p.series.shape[1] for p in result.paths if p.series is not None), len(head))
    return head + [f"M_{j}" for j in range(width - len(head))]


def _field_rows(domain, values):
    nodes = np.meshgrid(*domain.nodes, indexing="ij")
    cols = [x.reshape(-1) for x in nodes] + [values[..., c].reshape(-1) for c in range(3)]
    return np.column_stack(cols)


def write_run(result, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    (out / "config.json").write_text(cfg.canonical_json(), encoding="utf-8")
    write_json(out / "report.json", result.report())
    write_json(out / "timing.json", {"wall_time_seconds": result.wall_time})
    if any(p.series is not None for p in result.paths):
        (out / "paths").mkdir(exist_ok=True)
        header = series_header(result)
        for p in result.paths:
            if p.series is not None:
                write_csv(out / "paths" / f"{p.index}.csv", header, p.series)
    if any(p.snapshots for p in result.paths):
        dom = cfg.build_domain()
        coords = ["x", "y"][: dom.dim]
        for p in result.paths:
            if not p.snapshots:
                continue
            d = out / "fields" / str(p.index)
            d.mkdir(parents=True, exist_ok=True)
            for step, values in p.snapshots.items():
                write_csv(d / f"{step}.csv", coords + ["u1", "u2", "u3"], _field_rows(dom, values))
    return out


def write_table(path, rows):
    """Write dict rows as CSV; the header is the union of keys in first-seen order."""
    header = []
    for r in rows:
        header.extend(k for k in r if k not in header)
    write_csv(path, header, [[r.get(k) for k in header] for r in rows])


def write_convergence(report, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(report.config.canonical_json(), encoding="utf-8")
    write_json(out / "report.json", report.report())
    write_json(out / "timing.json", {"wall_time_seconds": report.wall_time})
    write_table(out / "convergence.csv", report.table_rows())
    strong = [{"n": n, "dt": dt, "error_mean": m, "error_se": s, "order": st["order"],
               "reference_dt": st["reference_dt"]}
              for n, st in sorted(report.strong.items())
              for dt, m, s in zip(st["dt"], st["error_mean"], st["error_se"])]
    if strong:
        write_table(out / "strong.csv", strong)
    return out


def write_martingale(result, out):
    out = Path(out)
    write_run(result, out)
    summary = result.martingale
    if summary is not None:
        rows = [{k: v for k, v in pr.items() if k not in ("checkpoints", "qv_ratio_ci95")}
                | {"qv_ratio_ci_low": (pr["qv_ratio_ci95"] or [None, None])[0],
                   "qv_ratio_ci_high": (pr["qv_ratio_ci95"] or [None, None])[1]}
                for pr in summary["probes"]]
        write_table(out / "martingale.csv", rows)
    return out
