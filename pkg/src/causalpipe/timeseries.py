"""Fixed-rate time-series batches and their CSV on-disk format.

CSV format: UTF-8, first line is the comma-separated header, every following
line is one row of full-precision decimal floats, newline-terminated. Cells
are written with repr() so a read-back reproduces the values exactly (well
inside the 1e-9 relative round-trip budget). A column literally named "time"
is carried for traceability and dropped before causal analysis.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TIME_COLUMN = "time"


class CsvFormatError(ValueError):
    """A CSV file does not conform to the batch format."""


@dataclass
class TimeSeriesBatch:
    """A table of named variables sampled on a fixed time grid."""

    variable_names: list[str]
    t0: float
    dt: float
    rows: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.variable_names = [str(n) for n in self.variable_names]
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError(f"rows must be 2-D, got shape {rows.shape}")
        if rows.shape[1] != len(self.variable_names):
            raise ValueError(
                f"row width {rows.shape[1]} does not match "
                f"{len(self.variable_names)} variable names"
            )
        if rows.size and not np.all(np.isfinite(rows)):
            raise ValueError("rows contain non-finite values")
        if len(set(self.variable_names)) != len(self.variable_names):
            raise ValueError(f"duplicate variable names: {self.variable_names}")
        self.rows = rows

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    @property
    def n_vars(self) -> int:
        return self.rows.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.variable_names.index(name)]

    def analysis_view(self) -> tuple[list[str], np.ndarray]:
        """Names and data with the "time" column (if any) dropped."""
        if TIME_COLUMN not in self.variable_names:
            return list(self.variable_names), self.rows
        keep = [i for i, n in enumerate(self.variable_names) if n != TIME_COLUMN]
        return [self.variable_names[i] for i in keep], self.rows[:, keep]


def write_csv(batch: TimeSeriesBatch, path: str | Path) -> None:
    """Write a batch atomically (temp file in the target dir, then rename)."""
    path = Path(path)
    lines = [",".join(batch.variable_names)]
    for row in batch.rows:
        lines.append(",".join(repr(float(v)) for v in row))
    payload = "\n".join(lines) + "\n"
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def read_csv(path: str | Path) -> TimeSeriesBatch:
    """Parse a batch CSV; malformed input raises with the offending line."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = fh.read().splitlines()
    if not raw_lines or not raw_lines[0].strip():
        raise CsvFormatError(f"{path.name}: missing header")
    names = [c.strip() for c in raw_lines[0].split(",")]
    if any(not n for n in names):
        raise CsvFormatError(f"{path.name}: line 1: empty header field")
    n_vars = len(names)
    data: list[list[float]] = []
    for lineno, line in enumerate(raw_lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != n_vars:
            raise CsvFormatError(
                f"{path.name}: line {lineno}: expected {n_vars} columns, got {len(cells)}"
            )
        row = []
        for cell in cells:
            try:
                value = float(cell)
            except ValueError:
                raise CsvFormatError(
                    f"{path.name}: line {lineno}: non-numeric cell {cell.strip()!r}"
                ) from None
            if not np.isfinite(value):
                raise CsvFormatError(
                    f"{path.name}: line {lineno}: non-finite cell {cell.strip()!r}"
                )
            row.append(value)
        data.append(row)
    rows = np.asarray(data, dtype=np.float64).reshape(len(data), n_vars)
    t0, dt = 0.0, 1.0
    if TIME_COLUMN in names and len(data) >= 1:
        t = rows[:, names.index(TIME_COLUMN)]
        t0 = float(t[0])
        if len(t) >= 2:
            dt = float(np.median(np.diff(t)))
    return TimeSeriesBatch(variable_names=names, t0=t0, dt=dt, rows=rows)
