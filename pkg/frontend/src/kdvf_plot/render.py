"""The four figure kinds rendered from run/kernel CSVs.

All rendering is file-to-file through a non-interactive backend; figures
carry no embedded timestamps by default so reruns are byte-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .csvio import RunData, SchemaError, read_kernel_csv, read_run_csv  # noqa: E402

__all__ = ["PlotJob", "render", "KINDS", "fit_decay_rate"]

KINDS = ("waterfall", "decay", "error", "kernel-heatmap")

# preferred columns for the decay figure, most informative first
_DECAY_COLUMNS = ("x_distance", "V_full", "V", "U", "E", "norm")


@dataclass(frozen=True)
class PlotJob:
    kind: str
    source: Path
    out: Path
    column: str | None = None
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; "
                              f"expected one of {', '.join(KINDS)}")
        if not Path(self.source).is_file():
            raise SchemaError(f"input file not found: {self.source}")


def _save(fig, out: Path):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {}
    suffix = out.suffix.lower()
    # suppress embedded creation dates so repeated renders are identical
    if suffix == ".svg":
        meta = {"Date": None}
    elif suffix == ".pdf":
        meta = {"CreationDate": None}
    fig.savefig(out, dpi=150, metadata=meta or None)
    plt.close(fig)


def fit_decay_rate(t: np.ndarray, q: np.ndarray,
                   window: tuple[float, float] | None = None):
    """Least-squares exponential rate on log q over the window, mirroring the
    simulation reports: samples restricted to the window and to the leading
    strictly positive prefix; None when fewer than 10 usable samples."""
    T = float(t[-1])
    if window is None:
        window = (0.05 * T, 0.6 * T)
    idx = np.nonzero((t >= window[0]) & (t <= window[1]))[0]
    keep = []
    for i in idx:
        if q[i] > 0.0:
            keep.append(i)
        else:
            break
    if len(keep) < 10:
        return None
    ts, ys = t[keep], np.log(q[keep])
    A = np.vstack([ts, np.ones_like(ts)]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    return float(-coef[0])


def _pick_decay_column(run: RunData, requested: str | None) -> str:
    if requested is not None:
        if requested not in run.columns:
            raise SchemaError(f"no column {requested!r}; "
                              f"have {sorted(run.columns)}")
        return requested
    for name in _DECAY_COLUMNS:
        if name in run.columns:
            return name
    others = [c for c in run.columns if c not in ("t", "wall_clock")]
    if not others:
        raise SchemaError("run CSV has no plottable columns")
    return others[0]


def _render_waterfall(run: RunData, out: Path):
    fig, ax = plt.subplots(figsize=(7, 5))
    t = run.t
    if run.snapshots is not None:
        snaps = run.snapshots
        L = float(run.metadata.get("L", snaps.shape[1] - 1))
        x = np.linspace(0.0, L, snaps.shape[1])
        nrec = snaps.shape[0]
        show = np.linspace(0, nrec - 1, min(nrec, 40)).astype(int)
        span = float(np.max(np.abs(snaps))) or 1.0
        for rank, i in enumerate(show):
            offset = rank * 0.8 * span
            ax.plot(x, snaps[i] + offset, lw=0.8,
                    color=plt.cm.viridis(rank / max(len(show) - 1, 1)))
        ax.set_xlabel("x")
        ax.set_ylabel("w(t, x) + offset (time increasing upward)")
        ax.set_title("state waterfall")
    else:
        # no snapshot columns: stack the recorded diagnostics instead
        names = [c for c in run.columns if c not in ("t", "wall_clock")]
        if not names:
            raise SchemaError("run CSV has no plottable columns")
        span = max(float(np.max(np.abs(run.columns[c]))) for c in names) or 1.0
        for rank, c in enumerate(names):
            ax.plot(t, run.columns[c] + rank * 1.2 * span, lw=0.9, label=c)
        ax.legend(loc="upper right", fontsize=7)
        ax.set_xlabel("t")
        ax.set_ylabel("recorded quantity + offset")
        ax.set_title("diagnostics waterfall")
    _save(fig, out)


def _render_decay(run: RunData, out: Path, column: str | None):
    name = _pick_decay_column(run, column)
    t = run.t
    q = run.columns[name]
    fig, ax = plt.subplots(figsize=(7, 5))
    pos = q > 0
    rate = fit_decay_rate(t, q)
    if np.any(pos):
        ax.semilogy(t[pos], q[pos], lw=1.0, label=name)
        if rate is not None:
            T = float(t[-1])
            a, b = 0.05 * T, 0.6 * T
            mask = (t >= a) & (t <= b) & pos
            if np.any(mask):
                t0 = t[mask][0]
                q0 = q[mask][0]
                ax.semilogy(t[mask], q0 * np.exp(-rate * (t[mask] - t0)),
                            "--", lw=1.0,
                            label=f"fit: rate = {rate:.2f}")
    else:
        # all-zero record: nothing decays, show the flat trace linearly
        ax.plot(t, q, lw=1.0, label=f"{name} (identically zero)")
    ax.set_xlabel("t")
    ax.set_ylabel(name)
    ax.set_title("decay" + (f" (fitted rate {rate:.2f})" if rate is not None
                            else " (no positive data to fit)"))
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, out)
    return rate


def _render_error(run: RunData, out: Path):
    if "e" in run.columns:
        name, vals = "e", run.columns["e"]
    elif "y" in run.columns:
        name, vals = "y", run.columns["y"]
    else:
        raise SchemaError("run CSV has neither 'e' nor 'y' column")
    t = run.t
    fig, ax = plt.subplots(figsize=(7, 5))
    mag = np.abs(vals)
    pos = mag > 0
    if np.any(pos):
        ax.semilogy(t[pos], mag[pos], lw=1.0, label=f"|{name}|")
    else:
        ax.plot(t, mag, lw=1.0, label=f"|{name}| (identically zero)")
    ax.axhline(1e-3, color="tab:red", ls=":", lw=1.0, label="1e-3")
    ax.set_xlabel("t")
    ax.set_ylabel(f"|{name}|")
    ax.set_title("tracking error")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, out)


def _render_kernel_heatmap(source: Path, out: Path):
    ker = read_kernel_csv(source)
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(ker.values, origin="lower",
                   extent=(0.0, ker.L, 0.0, ker.L), aspect="equal",
                   cmap="RdBu_r")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("z")
    ax.set_ylabel("x")
    ax.set_title(f"kernel {ker.name} (lambda = {ker.lam:g}, L = {ker.L:g})")
    _save(fig, out)


def render(job: PlotJob) -> float | None:
    """Render the job's figure; returns the fitted rate for decay plots."""
    if job.kind == "kernel-heatmap":
        _render_kernel_heatmap(Path(job.source), Path(job.out))
        return None
    run = read_run_csv(job.source)
    if job.kind == "waterfall":
        _render_waterfall(run, Path(job.out))
        return None
    if job.kind == "decay":
        return _render_decay(run, Path(job.out), job.column)
    _render_error(run, Path(job.out))
    return None
