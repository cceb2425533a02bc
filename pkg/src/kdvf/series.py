"""Per-step diagnostic records and their CSV serialization.

The CSV layout is the toolkit's only wire format: '#'-prefixed metadata
lines, one plain header line with column names, then comma-separated rows
printed with 17 significant digits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .grid import Grid

__all__ = ["TimeSeries", "format_float"]


def format_float(v: float) -> str:
    return "%.17g" % v


@dataclass
class TimeSeries:
    """Columnar record of a run plus optional full state snapshots."""

    columns: dict[str, np.ndarray]
    snapshots: list[np.ndarray] | None = None
    grid: Grid | None = None
    metadata: dict[str, str] = field(default_factory=dict)
    truncated: bool = False  # blow-up cut the run short

    def __len__(self) -> int:
        return len(next(iter(self.columns.values())))

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise ConfigurationError(
                f"no column {name!r}; have {sorted(self.columns)}"
            )
        return self.columns[name]

    def to_csv(self, path, include_snapshots: bool = False) -> None:
        names = [c for c in self.columns if c != "wall_clock"]
        snap_names: list[str] = []
        if include_snapshots and self.snapshots is not None:
            npts = len(self.snapshots[0])
            snap_names = [f"w{j:04d}" for j in range(npts)]
        with open(path, "w") as fh:
            for key, val in self.metadata.items():
                fh.write(f"# {key} = {val}\n")
            if self.truncated:
                fh.write("# truncated = true\n")
            fh.write(",".join(names + snap_names + ["wall_clock"]) + "\n")
            wall = self.columns.get("wall_clock", np.zeros(len(self)))
            for i in range(len(self)):
                row = [format_float(self.columns[c][i]) for c in names]
                if snap_names:
                    row += [format_float(v) for v in self.snapshots[i]]
                row.append(format_float(wall[i]))
                fh.write(",".join(row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
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
                rows.append([float(v) for v in line.split(",")])
        if header is None:
            raise ConfigurationError(f"{path}: no header line found")
        data = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
        snap_idx = [i for i, c in enumerate(header) if c.startswith("w") and c[1:].isdigit()]
        col_idx = [i for i in range(len(header)) if i not in snap_idx]
        columns = {header[i]: data[:, i] for i in col_idx}
        snapshots = None
        grid = None
        if snap_idx:
            snapshots = [data[r, snap_idx] for r in range(len(rows))]
            if "L" in metadata:
                grid = Grid(float(metadata["L"]), len(snap_idx) - 1)
        ts = cls(columns=columns, snapshots=snapshots, grid=grid, metadata=metadata)
        ts.truncated = metadata.get("truncated", "") == "true"
        return ts
