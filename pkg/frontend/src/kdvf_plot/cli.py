"""Command-line figure generation:

    kdvf-plot <kind> --in <csv> --out <file> [--column NAME] [--print-rate]

Kinds: waterfall | decay | error | kernel-heatmap. Exit 0 on success,
1 on schema/input errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .csvio import SchemaError
from .render import KINDS, PlotJob, render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kdvf-plot", description=__doc__)
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--in", dest="source", required=True,
                    help="input CSV (run CSV, or kernel CSV for kernel-heatmap)")
    ap.add_argument("--out", required=True, help="output figure file")
    ap.add_argument("--column", default=None,
                    help="column to plot for the decay figure")
    ap.add_argument("--print-rate", action="store_true",
                    help="print the fitted decay rate to stdout")
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    job_kwargs = dict(kind=args.kind, source=Path(args.source),
                      out=Path(args.out), column=args.column)
    try:
        rate = render(PlotJob(**job_kwargs))
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    if args.print_rate:
        if rate is None:
            print("rate unavailable")
        else:
            print(f"rate {rate:.17g}")
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
