"""Byte-stable result files: sorted keys, floats at 12 significant digits."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

DIGITS = 12


def fmt(x) -> str:
    """Shortest text of ``x`` rounded to 12 significant digits."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(f"{x:.{DIGITS}g}"))


def clean(obj):
    """Recursively convert numpy scalars/arrays and round floats for serialization."""
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
        return float(f"{x:.{DIGITS}g}") if math.isfinite(x) else x
    return obj


def dumps_json(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def dumps_csv(rows, columns=None) -> str:
    """CSV text for a list of flat dicts; columns default to the sorted union of keys."""
    rows = list(rows)
    if columns is None:
        columns = sorted({k for r in rows for k in r})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        out = []
        for c in columns:
            v = r.get(c, "")
            if isinstance(v, (bool, np.bool_)):
                out.append("true" if v else "false")
            elif isinstance(v, (float, np.floating)):
                out.append(fmt(v))
            else:
                out.append(str(v))
        w.writerow(out)
    return buf.getvalue()


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj))
    return path


def write_csv(path, rows, columns=None) -> Path:
    path = Path(path)
    path.write_text(dumps_csv(rows, columns))
    return path


def emit(results: dict, out_dir, fmt_: str = "json") -> list[Path]:
    """Write ``{name: payload}``: lists of dicts as CSV (``fmt_='csv'``), everything else as JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(results):
        payload = results[name]
        if fmt_ == "csv" and isinstance(payload, list):
            written.append(write_csv(out_dir / f"{name}.csv", payload))
        else:
            written.append(write_json(out_dir / f"{name}.json", payload))
    return written
