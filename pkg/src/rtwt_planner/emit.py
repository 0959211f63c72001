"""Stable machine-readable output: canonical JSON, CSV, and text tables.

JSON bytes are deterministic for identical inputs (sorted keys, fixed
indentation, shortest-repr floats, NaN and infinities mapped to null) and
every payload is checked against its bundled schema before leaving the
process.
"""

from __future__ import annotations

import csv
import io
import json
import math
from importlib import resources

import jsonschema

SCHEMA_NAMES = ("model_report", "sim_report", "optimal_choice")


def _sanitize(value):
    """Replace non-finite floats with None so output is strict JSON."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    return value


def load_schema(name: str) -> dict:
    if name not in SCHEMA_NAMES:
        raise ValueError(f"schema must be one of {SCHEMA_NAMES}, got {name!r}")
    text = resources.files("rtwt_planner.schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def json_bytes(payload: dict, schema: str | None = None) -> bytes:
    """Canonical JSON encoding, optionally validated against a bundled schema."""
    clean = _sanitize(payload)
    if schema is not None:
        jsonschema.validate(clean, load_schema(schema))
    return (json.dumps(clean, sort_keys=True, indent=2) + "\n").encode()


def _cell(value) -> str:
    """CSV cell rendering: shortest float repr, empty for missing."""
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def csv_bytes(header: list[str], rows: list[list]) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return out.getvalue().encode()


def table_text(header: list[str], rows: list[list]) -> str:
    """Aligned plain-text table for terminal output."""
    cells = [[_cell(v) for v in row] for row in rows]
    widths = [len(h) for h in header]
    for row in cells:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def kv_text(pairs: list[tuple[str, object]]) -> str:
    """Aligned key/value listing for single-report terminal output."""
    width = max(len(k) for k, _ in pairs)
    return "\n".join(f"{k.ljust(width)}  {_cell(v)}" for k, v in pairs) + "\n"
