"""Plot-ready tables: lists of row dicts written as CSV or JSON.

Floats are written with 17 significant digits, enough to round-trip any
double.  Infinite values (e.g. the asymmetry of a ground-state
oscillator) are written as the string ``inf`` in both formats.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, Mapping, TextIO

import numpy as np

FLOAT_FORMAT = "%.17g"


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


def write_csv(rows: Iterable[Mapping], stream: TextIO, columns=None) -> None:
    rows = list(rows)
    columns = list(columns or (rows[0].keys() if rows else []))
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row[c]) for c in columns])


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return v
    return value


def write_json(rows: Iterable[Mapping], stream: TextIO) -> None:
    data = [{k: _json_value(v) for k, v in row.items()} for row in rows]
    json.dump(data, stream, indent=1)
    stream.write("\n")


def _parse(value):
    if isinstance(value, str):
        low = value.lower()
        if low in ("true", "false"):
            return low == "true"
        try:
            return float(value)
        except ValueError:
            return value
    return value


def read_json(stream: TextIO) -> list[dict]:
    return [{k: _parse(v) for k, v in row.items()} for row in json.load(stream)]


def read_csv(stream: TextIO) -> list[dict]:
    return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(stream)]


def dumps(rows, fmt: str = "csv") -> str:
    buf = io.StringIO()
    if fmt == "csv":
        write_csv(rows, buf)
    elif fmt == "json":
        write_json(rows, buf)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return buf.getvalue()


def columns_to_rows(columns: Mapping[str, np.ndarray], extra: Mapping | None = None) -> list[dict]:
    """Turn equal-length arrays into row dicts, prefixing constant ``extra``
    fields (e.g. the detuning a block was computed at)."""
    extra = dict(extra or {})
    arrays = {k: np.atleast_1d(np.asarray(v)) for k, v in columns.items()}
    n = max(len(a) for a in arrays.values())
    arrays = {k: np.broadcast_to(a, (n,)) for k, a in arrays.items()}
    return [{**extra, **{k: a[i].item() for k, a in arrays.items()}} for i in range(n)]
