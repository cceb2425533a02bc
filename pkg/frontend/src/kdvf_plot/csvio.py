"""Readers for the simulation CSV wire format.

Two layouts exist:
  * run CSV: '#'-prefixed `key = value` metadata lines, one header line with
    column names (snapshot columns named w0000, w0001, ...), then rows of
    17-significant-digit floats with wall_clock last;
  * kernel CSV: a single '# kernel NAME lambda=.. L=.. n=..' line followed by
    the (n+1) x (n+1) matrix rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["RunData", "KernelData", "SchemaError", "read_run_csv", "read_kernel_csv"]


class SchemaError(ValueError):
    """The file does not conform to the expected CSV schema."""


@dataclass
class RunData:
    columns: dict[str, np.ndarray]
    snapshots: np.ndarray | None  # shape (nrec, npts) or None
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        if "t" not in self.columns:
            raise SchemaError("run CSV has no 't' column")
        return self.columns["t"]


@dataclass
class KernelData:
    name: str
    lam: float
    L: float
    values: np.ndarray  # (n+1, n+1)


def read_run_csv(path) -> RunData:
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"input file not found: {path}")
    metadata: dict[str, str] = {}
    header: list[str] | None = None
    rows: list[list[float]] = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("# ")
                if "=" in body:
                    key, _, val = body.partition("=")
                    metadata[key.strip()] = val.strip()
                continue
            if header is None:
                header = line.split(",")
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise SchemaError(f"{path}: non-numeric data row: {exc}") from exc
    if header is None:
        raise SchemaError(f"{path}: no header line found")
    if not rows:
        raise SchemaError(f"{path}: empty series (no data rows)")
    widths = {len(r) for r in rows}
    if widths != {len(header)}:
        raise SchemaError(f"{path}: ragged rows (header has {len(header)} fields)")
    data = np.asarray(rows, dtype=float)
    snap_idx = [i for i, c in enumerate(header)
                if c.startswith("w") and c[1:].isdigit()]
    col_idx = [i for i in range(len(header)) if i not in snap_idx]
    columns = {header[i]: data[:, i] for i in col_idx}
    snapshots = data[:, snap_idx] if snap_idx else None
    return RunData(columns=columns, snapshots=snapshots, metadata=metadata)


def read_kernel_csv(path) -> KernelData:
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"input file not found: {path}")
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            rows = [[float(v) for v in line.split(",")]
                    for line in fh if line.strip()]
        except ValueError as exc:
            raise SchemaError(f"{path}: non-numeric matrix row: {exc}") from exc
    parts = header.lstrip("# ").split()
    if len(parts) < 5 or parts[0] != "kernel":
        raise SchemaError(f"{path}: not a kernel CSV (header {header!r})")
    meta = dict(p.split("=", 1) for p in parts[2:] if "=" in p)
    try:
        lam = float(meta["lambda"])
        L = float(meta["L"])
        n = int(meta["n"])
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed kernel header: {exc}") from exc
    values = np.asarray(rows, dtype=float)
    if values.shape != (n + 1, n + 1):
        raise SchemaError(
            f"{path}: kernel matrix shape {values.shape}, expected {(n + 1, n + 1)}")
    return KernelData(name=parts[1], lam=lam, L=L, values=values)
