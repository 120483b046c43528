#!/usr/bin/env python3
"""Run the full lifetable regression pipeline on the bundled synthetic data.

Writes the seven-model comparison, fitted quantiles, split errors, and the
covariate-sweep curves under runs/mortality_example/.  Point --lifetables and
--covariates at real files (format: per-unit `age,lx` CSVs plus a covariates
CSV) to analyze actual data.
"""
import sys
from pathlib import Path

from fsireg.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data" / "synthetic_mortality"
OUT = ROOT / "runs" / "mortality_example"


def main():
    argv = sys.argv[1:] or [
        "--lifetables", str(DATA),
        "--covariates", str(DATA / "covariates.csv"),
        "--splits", "30", "--test-size", "10", "--seed", "0",
        "--out", str(OUT),
    ]
    code = cli_main(["mortality", *argv])
    if code == 0:
        print(f"wrote comparison tables under {OUT}")
    return code


if __name__ == "__main__":
    sys.exit(main())
