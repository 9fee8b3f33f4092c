#!/usr/bin/env python3
"""Emit CSV + SVG plots from the reports produced by run_all.py."""

import sys
from pathlib import Path

from anosovcheck.cli import emit_plot

JOBS = (
    ("reports/sl3-symsq-schottky/limit.json", "limit-set-rp2"),
    ("reports/sl3-symsq-schottky/limit.json", "delta-projection"),
    ("reports/sl3-symsq-schottky/anosov.json", "expansion-growth"),
    ("reports/sl2-schottky/anosov.json", "expansion-growth"),
    ("reports/sl2-schottky/uru.json", "margin-histogram"),
    ("reports/sanov-unipotent/uru.json", "margin-histogram"),
)


def main() -> int:
    missing = [path for path, _ in JOBS if not Path(path).exists()]
    if missing:
        print("run scripts/run_all.py first; missing:", *missing, file=sys.stderr)
        return 2
    for path, kind in JOBS:
        for out in emit_plot(path, kind):
            print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
