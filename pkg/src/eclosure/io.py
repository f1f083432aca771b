"""Input-file parsing and result-record serialization for the CLI.

Input files are either CSV with header ``index,value`` (kind supplied by
the caller) or ``index,w`` (knockoff statistics), or JSON objects
``{"kind": ..., "values": [...]}``. Indices must run 1..m contiguously;
out-of-range values are errors, never clamped, because the calibrators
are boundary-sensitive.
"""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path
from typing import Optional

from .core import VALUE_KINDS, ValueVector

__all__ = ["load_values", "record_to_json", "record_from_json"]


class InputFormatError(ValueError):
    """Malformed input file; message carries the line number."""


def _parse_csv(text: str, path: str, kind: Optional[str]) -> ValueVector:
    reader = csv.reader(_io.StringIO(text))
    rows = [(i + 1, row) for i, row in enumerate(reader) if row and any(c.strip() for c in row)]
    if not rows:
        raise InputFormatError(f"{path}: empty input file")
    header_line, header = rows[0]
    header = [c.strip().lower() for c in header]
    if header == ["index", "w"]:
        kind = "knockoff_stat"
    elif header == ["index", "value"]:
        if kind is None:
            raise InputFormatError(
                f"{path}:{header_line}: header 'index,value' needs an "
                f"explicit kind (--kind pvalue|evalue)"
            )
    else:
        raise InputFormatError(
            f"{path}:{header_line}: expected header 'index,value' or "
            f"'index,w', got {','.join(header)!r}"
        )
    entries = {}
    for line_no, row in rows[1:]:
        if len(row) != 2:
            raise InputFormatError(f"{path}:{line_no}: expected 2 columns, got {len(row)}")
        try:
            idx = int(row[0].strip())
            val = float(row[1].strip())
        except ValueError as exc:
            raise InputFormatError(f"{path}:{line_no}: {exc}") from None
        if idx in entries:
            raise InputFormatError(f"{path}:{line_no}: duplicate index {idx}")
        entries[idx] = val
    if not entries:
        raise InputFormatError(f"{path}: no data rows")
    m = len(entries)
    if sorted(entries) != list(range(1, m + 1)):
        raise InputFormatError(f"{path}: indices must run 1..{m} contiguously")
    try:
        return ValueVector(kind=kind, values=tuple(entries[i] for i in range(1, m + 1)))
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from None


def _parse_json(text: str, path: str, kind: Optional[str]) -> ValueVector:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(obj, dict) or "values" not in obj:
        raise InputFormatError(f"{path}: expected an object with 'kind' and 'values'")
    file_kind = obj.get("kind", kind)
    if file_kind not in VALUE_KINDS:
        raise InputFormatError(f"{path}: unknown kind {file_kind!r}")
    if kind is not None and file_kind != kind:
        raise InputFormatError(
            f"{path}: file declares kind {file_kind!r} but {kind!r} was requested"
        )
    try:
        return ValueVector(kind=file_kind, values=tuple(float(v) for v in obj["values"]))
    except (TypeError, ValueError) as exc:
        raise InputFormatError(f"{path}: {exc}") from None


def load_values(path: str, kind: Optional[str] = None) -> ValueVector:
    """Load a value vector from CSV or JSON (decided by content)."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _parse_json(text, path, kind)
    return _parse_csv(text, path, kind)


def record_to_json(record: dict) -> str:
    """One JSON line; keys sorted so equal records serialize identically."""
    return json.dumps(record, sort_keys=True, allow_nan=True)


def record_from_json(line: str) -> dict:
    return json.loads(line)
