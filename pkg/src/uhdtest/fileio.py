"""Matrix file formats: CSV with an optional header row, and the raw ``UHDM`` binary."""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .errors import DataFormatError

__all__ = ["read_matrix", "write_csv", "write_uhdm", "read_uhdm", "read_vector", "UHDM_MAGIC"]

UHDM_MAGIC = b"UHDM"
_HEADER = struct.Struct("<4sII")  # magic, n, p


def write_uhdm(path: str | Path, matrix: NDArray[np.float64]) -> None:
    m = np.ascontiguousarray(matrix, dtype="<f8")
    if m.ndim != 2:
        raise DataFormatError("UHDM files hold two-dimensional matrices")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(UHDM_MAGIC, m.shape[0], m.shape[1]))
        fh.write(m.tobytes(order="C"))


def read_uhdm(raw: bytes) -> NDArray[np.float64]:
    if len(raw) < _HEADER.size:
        raise DataFormatError("truncated UHDM header")
    magic, n, p = _HEADER.unpack_from(raw)
    if magic != UHDM_MAGIC:
        raise DataFormatError("not a UHDM file")
    expected = _HEADER.size + 8 * n * p
    if len(raw) != expected:
        raise DataFormatError(f"UHDM payload has {len(raw)} bytes, expected {expected} for {n} x {p}")
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, p).astype(np.float64)


def _parse_csv(text: str) -> NDArray[np.float64]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError("file holds no data rows")

    def numeric(row: list[str]) -> list[float] | None:
        try:
            return [float(c) for c in row]
        except ValueError:
            return None

    # the first row is a header exactly when it is not numeric
    if numeric(rows[0]) is None:
        rows = rows[1:]
        if not rows:
            raise DataFormatError("file holds a header but no data rows")
    out = []
    for i, row in enumerate(rows):
        vals = numeric(row)
        if vals is None:
            raise DataFormatError(f"non-numeric entry in data row {i + 1}")
        out.append(vals)
    width = len(out[0])
    if any(len(r) != width for r in out):
        raise DataFormatError("rows have differing numbers of columns")
    return np.array(out, dtype=np.float64)


def read_matrix(path: str | Path) -> NDArray[np.float64]:
    """Load a matrix with rows as observations; the format is sniffed from the magic bytes."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if raw[:4] == UHDM_MAGIC:
        return read_uhdm(raw)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path} is neither UHDM nor UTF-8 text") from exc
    return _parse_csv(text)


def read_vector(path: str | Path) -> NDArray[np.float64]:
    """All numbers in a matrix file, flattened (for population eigenvalue lists)."""
    return read_matrix(path).ravel()


def write_csv(path: str | Path, matrix: NDArray[np.float64], header: list[str] | None = None) -> None:
    m = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(header)
        for row in m:
            w.writerow([repr(float(v)) for v in row])
