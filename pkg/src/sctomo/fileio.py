"""Shared file plumbing: atomic writes, format versioning, CSV framing.

Every file the tool emits carries a ``format_version`` so readers can refuse
documents written by an incompatible (newer major) release. Writes go through
a temp-file-then-rename so partially written artifacts never appear under the
final name.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Any, Iterable, Sequence

FORMAT_VERSION = "1.0"

_VERSION_PREFIX = "# format_version="


class FormatVersionError(ValueError):
    """Raised when a file declares a newer major format version."""


def check_format_version(found: str, where: str = "") -> None:
    try:
        found_major = int(str(found).split(".")[0])
        ours_major = int(FORMAT_VERSION.split(".")[0])
    except (ValueError, IndexError):
        raise FormatVersionError(f"unparseable format_version {found!r} in {where}")
    if found_major > ours_major:
        raise FormatVersionError(
            f"{where or 'input'} has format_version {found}, newer than supported {FORMAT_VERSION}"
        )


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def fmt_number(x: Any) -> str:
    """Deterministic, round-trippable text for CSV numbers."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    v = float(x)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_json(path: str | Path, payload: dict) -> None:
    doc = {"format_version": FORMAT_VERSION}
    doc.update(payload)
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, dict) and "format_version" in doc:
        check_format_version(doc["format_version"], str(path))
    return doc


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    buf.write(f"{_VERSION_PREFIX}{FORMAT_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([c if isinstance(c, str) else fmt_number(c) for c in row])
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    atomic_write_text(path, csv_text(header, rows))


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith(_VERSION_PREFIX):
            check_format_version(line[len(_VERSION_PREFIX):].strip(), str(path))
            continue
        if line.startswith("#") or not line.strip():
            continue
        body.append(line)
    if not body:
        raise ValueError(f"{path}: no CSV header found")
    reader = csv.reader(body)
    rows = list(reader)
    return rows[0], rows[1:]
