"""Sphere-response simulation study: data generator, error metrics, runner.

Covariates are iid uniform rescaled so the index stays in [-1, 1]; the true
regression function maps the index onto a curve on S^2 and responses are
drawn by adding Gaussian tangent noise at the true mean.  The runner fits the
single-index estimator and the multivariate local Frechet competitor across a
bandwidth grid, replicate by replicate, and reports each error metric at its
average-minimizing bandwidth.

Replicates are seeded independently (one child seed per replicate), so runs
are reproducible regardless of execution order or worker count.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .fsi import (
    FsiConfig,
    default_bandwidth_grid,
    fit_theta_for_bandwidth,
    fsi_fitted,
    generate_starts,
    normalize_identifiable,
    InfeasibleFit,
)
from .geometry import Sphere, SphereSolverError, sphere_frechet_mean_batch
from .regression import RegressionDataset
from .smoothing import DegenerateWindow, multivariate_local_weights

_FIT_ERRORS = (DegenerateWindow, SphereSolverError, InfeasibleFit)


@dataclass(frozen=True)
class SimSetting:
    """One simulation cell: sample size, dimension, noise level, replication."""

    n: int
    p: int
    sigma2: float
    replicates: int
    seed: int = 0
    theta0: Optional[tuple] = None  # defaults to the normalized all-ones vector

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(
                "with a single covariate the index is fixed at 1; "
                "use local Frechet regression directly (index estimation needs p >= 2)"
            )
        if not self.sigma2 > 0:
            raise ValueError("noise level must be positive")
        if self.replicates < 1:
            raise ValueError("need at least one replicate")

    @property
    def key(self) -> str:
        return f"p{self.p}_n{self.n}_s{self.sigma2:g}"

    def theta0_vector(self) -> np.ndarray:
        if self.theta0 is None:
            return normalize_identifiable(np.ones(self.p)).theta
        return normalize_identifiable(np.asarray(self.theta0, dtype=float)).theta


def true_mean_on_sphere(U, p: int) -> np.ndarray:
    """True regression curve: index u -> point on S^2 (vectorized over u)."""
    U = np.asarray(U, dtype=float)
    s = U / np.sqrt(p)
    r = np.sqrt(np.maximum(1.0 - s * s, 0.0))
    ang = np.pi * s
    return np.stack([r * np.cos(ang), r * np.sin(ang), s], axis=-1)


def tangent_basis(m) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis of the tangent plane at m, built from the two
    coordinate axes least aligned with m."""
    m = np.asarray(m, dtype=float)
    order = np.argsort(np.abs(m))
    e1 = np.zeros(3)
    e1[order[0]] = 1.0
    e2 = np.zeros(3)
    e2[order[1]] = 1.0
    v1 = e1 - (e1 @ m) * m
    v1 /= np.linalg.norm(v1)
    v2 = e2 - (e2 @ m) * m - (e2 @ v1) * v1
    v2 /= np.linalg.norm(v2)
    return v1, v2


def _replicate_rng(setting: SimSetting, replicate: int) -> np.random.Generator:
    return np.random.default_rng([setting.seed, replicate])


def generate_sphere_dataset(setting: SimSetting, replicate: int) -> RegressionDataset:
    """Simulate one dataset; responses have conditional Frechet mean on the curve."""
    rng = _replicate_rng(setting, replicate)
    theta0 = setting.theta0_vector()
    X = rng.uniform(-1.0, 1.0, size=(setting.n, setting.p)) / np.sqrt(setting.p)
    U = X @ theta0
    M = true_mean_on_sphere(U, setting.p)
    Y = np.empty_like(M)
    sd = np.sqrt(setting.sigma2)
    for i in range(setting.n):
        v1, v2 = tangent_basis(M[i])
        c = rng.normal(0.0, sd, size=2)
        z = c[0] * v1 + c[1] * v2
        nrm = np.linalg.norm(z)
        if nrm == 0.0:
            Y[i] = M[i]
        else:
            Y[i] = np.cos(nrm) * M[i] + np.sin(nrm) * (z / nrm)
            Y[i] /= np.linalg.norm(Y[i])
    return RegressionDataset(X=X, Y=Y, kind=Sphere())


def se_theta(theta_hat, theta0) -> float:
    """Squared angular error of the index estimate, blind to the sign."""
    a = np.asarray(getattr(theta_hat, "theta", theta_hat), dtype=float)
    b = np.asarray(getattr(theta0, "theta", theta0), dtype=float)
    return float(np.arccos(np.clip(abs(a @ b), -1.0, 1.0)) ** 2)


def msee(fitted, truth) -> float:
    """Mean squared geodesic error between fitted and true sphere points."""
    fitted = np.asarray(fitted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if fitted.shape != truth.shape:
        raise ValueError("fitted and truth must have the same shape")
    dots = np.clip(np.sum(fitted * truth, axis=-1), -1.0, 1.0)
    return float(np.mean(np.arccos(dots) ** 2))


def _mlf_fitted(data: RegressionDataset, h: float, config: FsiConfig) -> np.ndarray:
    """In-sample multivariate local Frechet fits at every observation."""
    kernel = config.resolved_kernel()
    n = data.n
    W = np.empty((n, n))
    for i in range(n):
        W[i] = multivariate_local_weights(data.X, data.X[i], h, kernel)
    kap = np.prod(kernel((data.X[None, :, :] - data.X[:, None, :]) / h), axis=2)
    E = kap @ data.Y
    nrm = np.linalg.norm(E, axis=1)
    weak = nrm < 1e-12
    if np.any(weak):
        E = np.where(weak[:, None], data.Y.sum(axis=0)[None, :], E)
        nrm = np.linalg.norm(E, axis=1)
    init = E / nrm[:, None]
    pts, _ = sphere_frechet_mean_batch(data.Y, W, init, grad_tol=config.solver_grad_tol)
    return pts


def run_replicate(setting: SimSetting, replicate: int, bandwidths: Sequence[float],
                  starts: np.ndarray, config: FsiConfig) -> list[dict]:
    """Metric rows for one simulated dataset, one row per bandwidth."""
    data = generate_sphere_dataset(setting, replicate)
    theta0 = setting.theta0_vector()
    truth = true_mean_on_sphere(data.X @ theta0, setting.p)
    kernel = config.resolved_kernel()
    rows = []
    for h in bandwidths:
        bf = fit_theta_for_bandwidth(data, float(h), starts, config)
        if not bf.feasible:
            raise InfeasibleFit(f"index fit infeasible at h={h:.4g}")
        fitted_fsi = fsi_fitted(data, bf.theta, float(h), kernel,
                                grad_tol=config.solver_grad_tol)
        fitted_mlf = _mlf_fitted(data, float(h), config)
        rows.append({
            "setting": setting.key,
            "p": setting.p,
            "n": setting.n,
            "sigma2": setting.sigma2,
            "replicate": replicate,
            "h": float(h),
            "se_theta": se_theta(bf.theta, theta0),
            "msee_fsi": msee(fitted_fsi, truth),
            "msee_mlf": msee(fitted_mlf, truth),
        })
    return rows


def _worker(args):
    setting, replicate, bandwidths, starts, config = args
    try:
        return setting.key, replicate, run_replicate(setting, replicate, bandwidths,
                                                     starts, config), None
    except _FIT_ERRORS as exc:
        return setting.key, replicate, None, f"{type(exc).__name__}: {exc}"


@dataclass
class SimReport:
    replicate_rows: list = field(default_factory=list)
    summary_rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    bandwidths: dict = field(default_factory=dict)


def setting_bandwidths(setting: SimSetting, config: FsiConfig) -> np.ndarray:
    """Bandwidth grid for a setting, derived from a pilot replicate when not given."""
    if config.bandwidths is not None:
        return np.asarray(list(config.bandwidths), dtype=float)
    pilot = generate_sphere_dataset(setting, 0)
    return default_bandwidth_grid(pilot.X, config.n_bandwidths)


def _summarize(setting: SimSetting, rows: list[dict], bandwidths) -> dict:
    out = {
        "setting": setting.key,
        "p": setting.p,
        "n": setting.n,
        "sigma2": setting.sigma2,
        "replicates": len({r["replicate"] for r in rows}),
    }
    for metric in ("se_theta", "msee_fsi", "msee_mlf"):
        means = []
        for h in bandwidths:
            vals = [r[metric] for r in rows if r["h"] == float(h)]
            means.append(np.mean(vals) if vals else np.inf)
        k = int(np.argmin(means))
        h_best = float(bandwidths[k])
        vals = np.array([r[metric] for r in rows if r["h"] == h_best])
        out[f"h_best_{metric}"] = h_best
        out[f"avg_{metric}"] = float(vals.mean())
        out[f"sd_{metric}"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return out


def run_simulation(settings: Sequence[SimSetting], config: FsiConfig = None,
                   threads: int = 1) -> SimReport:
    """Run every (setting, replicate) cell and aggregate the error metrics.

    Starting angles are drawn once per setting (from the setting seed) and
    shared across its replicates.  Failed replicates are recorded and
    excluded from the averages.
    """
    config = config or FsiConfig()
    report = SimReport()
    tasks = []
    grids = {}
    starts_by_setting = {}
    for setting in settings:
        grid = setting_bandwidths(setting, config)
        grids[setting.key] = grid
        report.bandwidths[setting.key] = [float(h) for h in grid]
        starts_by_setting[setting.key] = generate_starts(
            setting.p, replace(config, seed=setting.seed))
        for rep in range(setting.replicates):
            tasks.append((setting, rep, tuple(float(h) for h in grid),
                          starts_by_setting[setting.key], config))

    results = {}
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for key, rep, rows, err in pool.map(_worker, tasks):
                results[(key, rep)] = (rows, err)
    else:
        for task in tasks:
            key, rep, rows, err = _worker(task)
            results[(key, rep)] = (rows, err)

    for setting in settings:
        rows_all = []
        for rep in range(setting.replicates):
            rows, err = results[(setting.key, rep)]
            if err is not None:
                report.failures.append({"setting": setting.key, "replicate": rep,
                                        "error": err})
            else:
                rows_all.extend(rows)
        report.replicate_rows.extend(rows_all)
        if rows_all:
            report.summary_rows.append(_summarize(setting, rows_all, grids[setting.key]))
    return report


_REPLICATE_COLS = ("setting", "p", "n", "sigma2", "replicate", "h",
                   "se_theta", "msee_fsi", "msee_mlf")
_SUMMARY_COLS = ("setting", "p", "n", "sigma2", "replicates",
                 "h_best_se_theta", "avg_se_theta", "sd_se_theta",
                 "h_best_msee_fsi", "avg_msee_fsi", "sd_msee_fsi",
                 "h_best_msee_mlf", "avg_msee_mlf", "sd_msee_mlf")


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_replicates_csv(report: SimReport, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_REPLICATE_COLS)
        for row in report.replicate_rows:
            w.writerow([_fmt(row[c]) for c in _REPLICATE_COLS])


def write_summary_csv(report: SimReport, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_SUMMARY_COLS)
        for row in report.summary_rows:
            w.writerow([_fmt(row[c]) for c in _SUMMARY_COLS])


def write_dataset_csv(setting: SimSetting, replicate: int, path):
    """Dump one simulated dataset: covariates, responses, and true means."""
    data = generate_sphere_dataset(setting, replicate)
    truth = true_mean_on_sphere(data.X @ setting.theta0_vector(), setting.p)
    cols = [f"x{j + 1}" for j in range(setting.p)] + ["y1", "y2", "y3", "m1", "m2", "m3"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for i in range(setting.n):
            w.writerow([_fmt(v) for v in (*data.X[i], *data.Y[i], *truth[i])])
