#!/usr/bin/env python3
"""Generate the bundled synthetic mortality dataset under data/synthetic_mortality/.

40 units with 5 standardized covariates and a known index direction; the
age-at-death law is a truncated normal whose location and spread depend on
the index through saturating (clearly nonlinear) links, so an affine-in-x
fit is misspecified by construction.  Lifetables are the discretized
survivor counts of that law.  Deterministic; rerunning overwrites in place.
"""
import csv
from pathlib import Path

import numpy as np
from scipy.special import ndtr

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "data" / "synthetic_mortality"

N_UNITS = 40
SEED = 20240817
THETA0 = np.array([0.66, 0.66, 0.25, 0.18, 0.18])
THETA0 = THETA0 / np.linalg.norm(THETA0)
AGE_LO, AGE_HI = 20, 110
COVARIATES = ("hdi", "hce", "gdpc", "im", "co2e")


def truncated_normal_cdf(x, mu, sd, lo, hi):
    a = ndtr((lo - mu) / sd)
    b = ndtr((hi - mu) / sd)
    return (ndtr((x - mu) / sd) - a) / (b - a)


def main():
    rng = np.random.default_rng(SEED)
    X = rng.normal(size=(N_UNITS, len(THETA0)))
    # exact sample standardization so the pipeline's own standardization
    # is the identity and the generating index direction is preserved
    X = (X - X.mean(axis=0)) / X.std(axis=0, ddof=0)
    U = X @ THETA0

    mu = 76.0 + 9.0 * np.tanh(1.2 * U) + rng.normal(0.0, 1.1, size=N_UNITS)
    sd = 10.5 - 3.5 * np.tanh(1.2 * U) + rng.normal(0.0, 0.6, size=N_UNITS)

    OUT.mkdir(parents=True, exist_ok=True)
    ages = np.arange(AGE_LO, AGE_HI + 1)
    for i in range(N_UNITS):
        unit = f"unit{i:02d}"
        cdf = truncated_normal_cdf(ages.astype(float), mu[i], sd[i], AGE_LO, AGE_HI)
        lx = np.rint(100000.0 * (1.0 - cdf)).astype(int)
        lx[0] = 100000
        lx[-1] = 0
        lx = np.minimum.accumulate(lx)
        with open(OUT / f"{unit}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["age", "lx"])
            for a, v in zip(ages, lx):
                w.writerow([a, v])

    with open(OUT / "covariates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", *COVARIATES])
        for i in range(N_UNITS):
            w.writerow([f"unit{i:02d}"] + [repr(float(v)) for v in X[i]])

    with open(OUT / "truth.json", "w") as fh:
        import json
        json.dump({"theta0": [float(v) for v in THETA0], "seed": SEED,
                   "links": "mu = 76 + 9 tanh(1.2 u); sd = 10.5 - 3.5 tanh(1.2 u)"},
                  fh, indent=2)
        fh.write("\n")
    print(f"wrote {N_UNITS} lifetables + covariates to {OUT}")


if __name__ == "__main__":
    main()
