"""CSV helpers. Files have one header row, observations as rows, '.' decimals."""
from __future__ import annotations

import csv
import io
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

__all__ = ["read_matrix", "read_table", "write_matrix", "write_table"]


def _open_out(path):
    if path is None or str(path) == "-":
        return io.TextIOWrapper(sys.stdout.buffer, encoding="utf-8", newline="", write_through=True), False
    return open(path, "w", newline="", encoding="utf-8"), True


def read_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None
    if not rows:
        raise DataError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{i}: expected {len(header)} fields, got {len(r)}")
    return header, body


def read_matrix(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Numeric CSV with a header row; returns column names and a float matrix."""
    header, body = read_table(path)
    if not body:
        raise DataError(f"{path} has no data rows")
    try:
        x = np.array(body, dtype=float)
    except ValueError:
        raise DataError(f"{path} contains non-numeric fields") from None
    if not np.all(np.isfinite(x)):
        raise DataError(f"{path} contains non-finite values")
    return header, x


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    fh, close = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    finally:
        if close:
            fh.close()
        else:
            fh.detach()


def write_matrix(path, header: Sequence[str], x: np.ndarray) -> None:
    write_table(path, header, x.tolist())
