"""CSV output with a fixed column order and 6-significant-digit floats."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

FLOAT_FORMAT = "%.6g"


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return FLOAT_FORMAT % v
    return str(v)


def to_csv(columns: list[str], rows: list[dict]) -> str:
    """Render rows; keys missing from a row become empty cells, extra keys are an error."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    known = set(columns)
    for row in rows:
        extra = set(row) - known
        if extra:
            raise ValueError(f"row has columns outside the schema: {sorted(extra)}")
        w.writerow([format_value(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, columns: list[str], rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_csv(columns, rows))
    return path
