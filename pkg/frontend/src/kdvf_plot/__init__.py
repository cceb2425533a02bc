"""Figure generation for the KdV boundary-control simulation CSV outputs."""

from .csvio import KernelData, RunData, SchemaError, read_kernel_csv, read_run_csv
from .render import KINDS, PlotJob, fit_decay_rate, render

__all__ = [
    "KINDS",
    "KernelData",
    "PlotJob",
    "RunData",
    "SchemaError",
    "fit_decay_rate",
    "read_kernel_csv",
    "read_run_csv",
    "render",
]

__version__ = "0.1.0"
