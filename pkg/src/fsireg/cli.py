"""Command-line interface: `simulate`, `mortality`, and `fit` subcommands.

Every run writes a manifest (resolved config, seed, input digests, version,
wall-clock time) next to its outputs so results can be reproduced bit for
bit.  Exit codes: 0 success, 1 bad input or configuration, 2 numerical
failure during fitting.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .fsi import FsiConfig, InfeasibleFit, fit_fsi
from .geometry import Euclidean1D, Sphere, SphereSolverError, Wasserstein1D
from .mortality import MortalityConfig, run_mortality_pipeline
from .regression import RegressionDataset
from .smoothing import DegenerateWindow
from .spheresim import (
    SimSetting,
    run_simulation,
    write_dataset_csv,
    write_replicates_csv,
    write_summary_csv,
)

_NUMERICAL_ERRORS = (DegenerateWindow, SphereSolverError, InfeasibleFit)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the CLI contract reserves 2 for
    # numerical failures, so remap usage errors to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_threads(value) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("FSI_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _write_manifest(out_dir: Path, command: str, config: dict, seed, t0: float,
                    inputs=(), outputs=(), status="ok", detail=None):
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "duration_s": time.time() - t0,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "status": status,
    }
    if detail:
        manifest["detail"] = detail
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _parse_floats(text):
    return [float(tok) for tok in text.split(",") if tok.strip()]


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    t0 = time.time()
    out = Path(args.out)
    try:
        if args.settings:
            with open(args.settings) as fh:
                raw = json.load(fh)
            settings = [SimSetting(
                n=int(s["n"]), p=int(s["p"]), sigma2=float(s["sigma2"]),
                replicates=int(s["replicates"]), seed=int(s.get("seed", args.seed)),
                theta0=tuple(s["theta0"]) if s.get("theta0") else None,
            ) for s in raw]
        else:
            if args.n is None or args.p is None or args.sigma2 is None:
                raise ValueError("provide --settings or all of --n/--p/--sigma2")
            theta0 = tuple(_parse_floats(args.theta0)) if args.theta0 else None
            settings = [SimSetting(n=args.n, p=args.p, sigma2=args.sigma2,
                                   replicates=args.replicates, seed=args.seed,
                                   theta0=theta0)]
        bandwidths = _parse_floats(args.bandwidths) if args.bandwidths else None
        config = FsiConfig(bandwidths=bandwidths, seed=args.seed, kernel=args.kernel)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out.mkdir(parents=True, exist_ok=True)
    threads = _resolve_threads(args.threads)
    config_echo = {"settings": [asdict(s) for s in settings],
                   "fsi": asdict(config), "threads": threads}
    inputs = [args.settings] if args.settings else []
    try:
        report = run_simulation(settings, config, threads=threads)
    except _NUMERICAL_ERRORS as exc:
        _write_manifest(out, "simulate", config_echo, args.seed, t0,
                        inputs=inputs, status="failed", detail=str(exc))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2

    rep_path = out / "sim_replicates.csv"
    sum_path = out / "sim_summary.csv"
    write_replicates_csv(report, rep_path)
    write_summary_csv(report, sum_path)
    outputs = [rep_path, sum_path]
    if args.dump_data:
        ddir = out / "datasets"
        ddir.mkdir(exist_ok=True)
        for s in settings:
            for rep in range(s.replicates):
                path = ddir / f"{s.key}_rep{rep}.csv"
                write_dataset_csv(s, rep, path)
                outputs.append(path)
    status = "ok" if not report.failures else "replicate-failures"
    _write_manifest(out, "simulate", config_echo, args.seed, t0, inputs=inputs,
                    outputs=outputs, status=status,
                    detail=report.failures or None)
    if report.failures:
        print(f"{len(report.failures)} replicate(s) failed", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# mortality
# ---------------------------------------------------------------------------

def _write_comparison_csv(comp, path, with_mspe):
    cols = ["model", "h_star", "r2"]
    if with_mspe:
        cols += ["mspe_mean", "mspe_sd", "failed_splits"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for name in comp.model_names:
            row = [name,
                   "" if comp.h_star.get(name) is None else _fmt(comp.h_star[name]),
                   _fmt(comp.r2[name])]
            if with_mspe:
                row += [_fmt(comp.mspe_mean(name)), _fmt(comp.mspe_sd(name)),
                        comp.failed_splits.get(name, 0)]
            w.writerow(row)


def cmd_mortality(args) -> int:
    t0 = time.time()
    out = Path(args.out)
    try:
        lifetable_dir = Path(args.lifetables)
        covariates = Path(args.covariates)
        if not lifetable_dir.is_dir():
            raise ValueError(f"lifetable directory not found: {lifetable_dir}")
        if not covariates.is_file():
            raise ValueError(f"covariates file not found: {covariates}")
        age_range = tuple(_parse_floats(args.age_range))
        if len(age_range) != 2:
            raise ValueError("--age-range expects 'lo,hi'")
        fsi_cfg = FsiConfig(start_mode=args.starts, seed=args.seed,
                            kernel=args.kernel,
                            loocv_refit_theta=args.loocv_refit_theta,
                            bandwidths=_parse_floats(args.bandwidths) if args.bandwidths else None)
        config = MortalityConfig(
            age_range=age_range, n_levels=args.levels,
            smoothing_bw="auto" if args.smoothing_bw == "auto" else float(args.smoothing_bw),
            splits=args.splits, test_size=args.test_size, seed=args.seed,
            kernel=args.kernel, fsi=fsi_cfg,
        )
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    config_echo = {"age_range": list(config.age_range), "levels": config.n_levels,
                   "smoothing_bw": str(config.smoothing_bw), "splits": config.splits,
                   "test_size": config.test_size, "seed": config.seed,
                   "kernel": config.kernel, "fsi": asdict(config.fsi)}
    inputs = [covariates] + sorted(lifetable_dir.glob("*.csv"))
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = run_mortality_pipeline(lifetable_dir, covariates, config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _NUMERICAL_ERRORS as exc:
        _write_manifest(out, "mortality", config_echo, args.seed, t0,
                        inputs=inputs, status="failed", detail=str(exc))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2

    comp = result.comparison
    outputs = []

    path = out / "comparison.csv"
    _write_comparison_csv(comp, path, with_mspe=config.splits > 0)
    outputs.append(path)

    path = out / "theta_hat.json"
    with open(path, "w") as fh:
        json.dump({
            "theta": [float(v) for v in result.fsi_fit.theta_hat.theta],
            "eta": [float(v) for v in result.fsi_fit.theta_hat.eta],
            "h_star": result.fsi_fit.h_star,
            "criterion": result.fsi_fit.criterion,
            "covariates": list(result.covariate_names),
        }, fh, indent=2)
        fh.write("\n")
    outputs.append(path)

    path = out / "fitted_quantiles.csv"
    levels = result.dataset.kind.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "unit", "level", "quantile"])
        for name, fitted in result.fitted.items():
            for unit, row in zip(result.units, fitted):
                for t, q in zip(levels, row):
                    w.writerow([name, unit, _fmt(float(t)), _fmt(float(q))])
    outputs.append(path)

    if config.splits > 0:
        path = out / "splits.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "split", "mspe"])
            for name in comp.model_names:
                for k, v in enumerate(comp.mspe[name]):
                    w.writerow([name, k, _fmt(v)])
        outputs.append(path)

    path = out / "whatif.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["covariate", "value", "level", "quantile"])
        for cov, v, t, q in result.whatif:
            w.writerow([cov, _fmt(v), _fmt(t), _fmt(q)])
    outputs.append(path)

    _write_manifest(out, "mortality", config_echo, args.seed, t0,
                    inputs=inputs, outputs=outputs)
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _load_fit_dataset(path, geometry):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError("data file is empty")
        cols = reader.fieldnames
        rows = list(reader)
    xcols = sorted((c for c in cols if c.startswith("x") and c[1:].isdigit()),
                   key=lambda c: int(c[1:]))
    if not xcols:
        raise ValueError("no covariate columns x1..xp found")
    X = np.array([[float(r[c]) for c in xcols] for r in rows])
    if geometry == "sphere":
        ycols = ["y1", "y2", "y3"]
        missing = [c for c in ycols if c not in cols]
        if missing:
            raise ValueError(f"sphere responses need columns {missing}")
        Y = np.array([[float(r[c]) for c in ycols] for r in rows])
        return RegressionDataset(X=X, Y=Y, kind=Sphere())
    if geometry == "euclidean":
        if "y" not in cols:
            raise ValueError("euclidean responses need a column 'y'")
        Y = np.array([float(r["y"]) for r in rows])
        return RegressionDataset(X=X, Y=Y, kind=Euclidean1D())
    if geometry == "wasserstein":
        qcols = sorted((c for c in cols if c.startswith("q")),
                       key=lambda c: float(c[1:]))
        if len(qcols) < 2:
            raise ValueError("wasserstein responses need columns q<level>, e.g. q0.0,q0.5,q1.0")
        levels = np.array([float(c[1:]) for c in qcols])
        Y = np.array([[float(r[c]) for c in qcols] for r in rows])
        return RegressionDataset(X=X, Y=Y, kind=Wasserstein1D(levels))
    raise ValueError(f"unknown geometry {geometry!r}")


def cmd_fit(args) -> int:
    t0 = time.time()
    out = Path(args.out)
    try:
        data = _load_fit_dataset(args.data, args.geometry)
        bandwidths = _parse_floats(args.bandwidths) if args.bandwidths else None
        config = FsiConfig(bandwidths=bandwidths, seed=args.seed,
                           kernel=args.kernel, start_mode=args.starts,
                           loocv_refit_theta=args.loocv_refit_theta)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out.mkdir(parents=True, exist_ok=True)
    config_echo = {"geometry": args.geometry, "fsi": asdict(config)}
    try:
        fit = fit_fsi(data, config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _NUMERICAL_ERRORS as exc:
        _write_manifest(out, "fit", config_echo, args.seed, t0,
                        inputs=[args.data], status="failed", detail=str(exc))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2

    outputs = []
    path = out / "theta_hat.json"
    with open(path, "w") as fh:
        json.dump({
            "theta": [float(v) for v in fit.theta_hat.theta],
            "eta": [float(v) for v in fit.theta_hat.eta],
            "h_star": fit.h_star,
            "criterion": fit.criterion,
            "loocv_scores": {repr(h): s for h, s in sorted(fit.loocv_scores.items())},
        }, fh, indent=2)
        fh.write("\n")
    outputs.append(path)

    path = out / "fitted.csv"
    fitted = np.atleast_2d(np.asarray(fit.fitted, dtype=float))
    if fitted.shape[0] == 1 and data.n > 1:
        fitted = fitted.T
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row"] + [f"fit{j + 1}" for j in range(fitted.shape[1])])
        for i in range(data.n):
            w.writerow([i] + [_fmt(float(v)) for v in np.atleast_1d(fitted[i])])
    outputs.append(path)

    path = out / "trace.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "start_index", "stage1_value", "selected", "wn_final"])
        for bf in fit.per_h:
            for r in bf.trace:
                w.writerow([_fmt(bf.h), r.start_index, _fmt(r.stage1_value),
                            int(r.selected),
                            "" if r.wn_final is None else _fmt(r.wn_final)])
    outputs.append(path)

    _write_manifest(out, "fit", config_echo, args.seed, t0,
                    inputs=[args.data], outputs=outputs)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fsireg",
                     description="Single-index Frechet regression toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the sphere-response simulation study")
    p.add_argument("--settings", help="JSON file with a list of simulation settings")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bandwidths", help="comma-separated grid, e.g. 0.1,0.2,0.4")
    p.add_argument("--theta0", help="comma-separated true index, normalized internally")
    p.add_argument("--kernel", default="gaussian", choices=["gaussian", "epanechnikov"])
    p.add_argument("--threads", type=int)
    p.add_argument("--dump-data", action="store_true",
                   help="also write each simulated dataset as CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mortality", help="lifetable distribution regression pipeline")
    p.add_argument("--lifetables", required=True, help="directory of <unit>.csv files")
    p.add_argument("--covariates", required=True, help="covariates CSV (first column: unit)")
    p.add_argument("--out", required=True)
    p.add_argument("--splits", type=int, default=30)
    p.add_argument("--test-size", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--age-range", default="20,110")
    p.add_argument("--levels", type=int, default=101)
    p.add_argument("--smoothing-bw", default="auto")
    p.add_argument("--bandwidths")
    p.add_argument("--kernel", default="gaussian", choices=["gaussian", "epanechnikov"])
    p.add_argument("--starts", default="lattice", choices=["lattice", "random"])
    p.add_argument("--loocv-refit-theta", action="store_true",
                   help="re-estimate the index for every held-out point (slow, exact)")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_mortality)

    p = sub.add_parser("fit", help="fit the single-index model to a CSV dataset")
    p.add_argument("--geometry", required=True,
                   choices=["sphere", "wasserstein", "euclidean"])
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bandwidths")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kernel", default="gaussian", choices=["gaussian", "epanechnikov"])
    p.add_argument("--starts", default="random", choices=["lattice", "random"])
    p.add_argument("--loocv-refit-theta", action="store_true",
                   help="re-estimate the index for every held-out point (slow, exact)")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
