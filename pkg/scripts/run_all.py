#!/usr/bin/env python3
"""Run every bundled experiment config into ./reports."""

import sys

from anosovcheck.cli import bundled_config_path, run_config

CONFIGS = ("sl2-schottky", "sl3-symsq-schottky", "sanov-unipotent")


def main() -> int:
    worst = 0
    for name in CONFIGS:
        print(f"== {name}")
        code = run_config(bundled_config_path(name), out_dir=f"reports/{name}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
