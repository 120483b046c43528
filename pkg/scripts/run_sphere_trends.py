#!/usr/bin/env python3
"""Desk-scale sphere simulation experiment: error trends over n at p=2.

Runs 50 replicates per sample size with a shared seed and writes the
replicate and summary tables under runs/sphere_trends/.  This is the small
configuration; pass --full for the 200-replicate, p in {2, 5, 10} study
(hours of compute).
"""
import argparse
import sys
from pathlib import Path

from fsireg.cli import main as cli_main

OUT = Path(__file__).resolve().parents[1] / "runs" / "sphere_trends"
BANDWIDTHS = "0.125,0.2,0.35,0.6,0.9"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--full", action="store_true",
                    help="200 replicates and p in {2,5,10} per noise level")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()

    import json
    import tempfile

    if args.full:
        settings = [
            {"n": n, "p": p, "sigma2": s2, "replicates": 200, "seed": 7}
            for s2 in (0.4, 0.8) for p in (2, 5, 10) for n in (50, 100, 200)
        ]
    else:
        settings = [{"n": n, "p": 2, "sigma2": 0.4, "replicates": 50, "seed": 7}
                    for n in (50, 100, 200)]

    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(settings, fh)
        settings_path = fh.name

    argv = ["simulate", "--settings", settings_path,
            "--bandwidths", BANDWIDTHS, "--seed", "7",
            "--out", str(OUT)]
    if args.threads:
        argv += ["--threads", str(args.threads)]
    code = cli_main(argv)
    if code == 0:
        print(f"wrote {OUT}/sim_replicates.csv and {OUT}/sim_summary.csv")
    return code


if __name__ == "__main__":
    sys.exit(main())
