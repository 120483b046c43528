"""Distribution-valued regression on lifetable data.

Per-unit lifetables are turned into age-at-death quantile functions (histogram
-> boundary-reflected Gaussian density -> analytic CDF inversion), then seven
models are compared: global Frechet, one local Frechet fit per covariate, and
the single-index fit.  Goodness of fit is summarized by the Frechet coefficient
of determination and by out-of-sample squared prediction error over random
train/test splits.

Input formats: one `<unit>.csv` per unit with header `age,lx`, plus a
covariates CSV whose first column is the unit id.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr  # standard normal CDF, vectorized

from .fsi import (
    FsiConfig,
    FsiFit,
    InfeasibleFit,
    default_bandwidth_grid,
    fit_fsi,
    fit_theta_for_bandwidth,
    generate_starts,
    loocv_bandwidth,
)
from .geometry import QuantileGrid, SphereSolverError, Wasserstein1D
from .regression import (
    RegressionDataset,
    global_frechet_weights,
    local_frechet_at,
    standardize,
)
from .smoothing import DegenerateWindow, Kernel, get_kernel, scalar_local_weights

_FIT_ERRORS = (DegenerateWindow, SphereSolverError, InfeasibleFit)

DEFAULT_AGE_RANGE = (20.0, 110.0)
DEFAULT_N_LEVELS = 101
DEFAULT_COVARIATES = ("hdi", "hce", "gdpc", "im", "co2e")


@dataclass(frozen=True)
class Lifetable:
    """Survivor counts by integer age for one unit, normalized to 100000 at birth."""

    unit: str
    ages: np.ndarray
    survivors: np.ndarray

    def __post_init__(self):
        ages = np.array(self.ages, dtype=int)
        surv = np.array(self.survivors, dtype=float)
        if ages.ndim != 1 or surv.shape != ages.shape or ages.size < 2:
            raise ValueError(f"lifetable {self.unit}: ages/survivors malformed")
        if np.any(np.diff(ages) <= 0):
            raise ValueError(f"lifetable {self.unit}: ages must be strictly increasing")
        if np.any(np.diff(surv) > 0):
            raise ValueError(f"lifetable {self.unit}: survivor counts increase (non-monotone lx)")
        if abs(surv[0] - 100000.0) > 1.0:
            raise ValueError(f"lifetable {self.unit}: initial population is not 100000")
        ages.setflags(write=False)
        surv.setflags(write=False)
        object.__setattr__(self, "ages", ages)
        object.__setattr__(self, "survivors", surv)


def read_lifetable(path, unit: Optional[str] = None) -> Lifetable:
    path = Path(path)
    unit = unit or path.stem
    ages, surv = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"age", "lx"} <= set(reader.fieldnames):
            raise ValueError(f"lifetable {unit}: expected header 'age,lx'")
        for row in reader:
            ages.append(int(row["age"]))
            surv.append(float(row["lx"]))
    return Lifetable(unit=unit, ages=np.array(ages), survivors=np.array(surv))


def default_levels(n: int = DEFAULT_N_LEVELS) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def _death_histogram(lt: Lifetable, lo: float, hi: float):
    """Death counts per one-year bin restricted to [lo, hi), renormalized."""
    ages = lt.ages
    deaths = lt.survivors[:-1] - lt.survivors[1:]
    centers = ages[:-1] + 0.5
    keep = (centers >= lo) & (centers < hi)
    mass = deaths[keep]
    total = mass.sum()
    if total <= 0:
        raise ValueError(f"lifetable {lt.unit}: no deaths inside [{lo}, {hi})")
    return centers[keep].astype(float), mass / total, total


def silverman_bandwidth(centers, masses, n_eff) -> float:
    """Rule-of-thumb kernel bandwidth for a weighted sample."""
    mean = np.sum(masses * centers)
    var = np.sum(masses * (centers - mean) ** 2)
    sd = np.sqrt(max(var, 1e-12))
    cum = np.cumsum(masses)
    q25 = centers[np.searchsorted(cum, 0.25)]
    q75 = centers[np.searchsorted(cum, 0.75)]
    spread = min(sd, (q75 - q25) / 1.34) or sd
    return 0.9 * spread * max(n_eff, 2.0) ** (-0.2)


def _reflected_cdf(x, centers, masses, bw, lo, hi):
    """CDF at x of a Gaussian mixture on [lo, hi] with boundary reflection."""
    x = np.asarray(x, dtype=float)[..., None]
    parts = ndtr((x - centers) / bw) - ndtr((lo - centers) / bw)
    refl_lo = ndtr((x - (2 * lo - centers)) / bw) - ndtr((lo - (2 * lo - centers)) / bw)
    refl_hi = ndtr((x - (2 * hi - centers)) / bw) - ndtr((lo - (2 * hi - centers)) / bw)
    return np.sum(masses * (parts + refl_lo + refl_hi), axis=-1)


def lifetable_to_quantile(lt: Lifetable, age_range=DEFAULT_AGE_RANGE,
                          grid=None, smoothing_bw="auto") -> QuantileGrid:
    """Smoothed age-at-death quantile function of one lifetable.

    The death histogram over `age_range` is smoothed with a boundary-reflected
    Gaussian kernel; the analytic CDF is inverted by bisection on the shared
    probability grid.  Endpoint quantiles are clamped to the age range.
    """
    lo, hi = float(age_range[0]), float(age_range[1])
    if not lo < hi:
        raise ValueError("age range must satisfy lo < hi")
    if lo < lt.ages[0] or hi > lt.ages[-1] + 1:
        raise ValueError(f"lifetable {lt.unit}: age range outside the table span")
    grid = default_levels() if grid is None else np.asarray(grid, dtype=float)
    centers, masses, total = _death_histogram(lt, lo, hi)
    if smoothing_bw == "auto":
        bw = silverman_bandwidth(centers, masses, total)
    else:
        bw = float(smoothing_bw)
        if bw <= 0:
            raise ValueError("smoothing bandwidth must be positive")

    norm = _reflected_cdf(np.array([hi]), centers, masses, bw, lo, hi)[0]
    targets = grid * norm
    lo_vec = np.full(grid.shape, lo)
    hi_vec = np.full(grid.shape, hi)
    for _ in range(60):
        mid = 0.5 * (lo_vec + hi_vec)
        below = _reflected_cdf(mid, centers, masses, bw, lo, hi) < targets
        lo_vec = np.where(below, mid, lo_vec)
        hi_vec = np.where(below, hi_vec, mid)
    values = 0.5 * (lo_vec + hi_vec)
    values[0] = lo if grid[0] == 0.0 else values[0]
    values[-1] = hi if grid[-1] == 1.0 else values[-1]
    return QuantileGrid(grid, np.maximum.accumulate(values))


def sample_frechet_mean_wasserstein(Y) -> np.ndarray:
    """Pointwise mean of quantile rows: the sample Frechet mean in this geometry."""
    Q = np.asarray([y.values if isinstance(y, QuantileGrid) else y for y in Y], dtype=float)
    if Q.ndim != 2 or Q.shape[0] == 0:
        raise ValueError("need a nonempty stack of quantile vectors on a shared grid")
    return Q.mean(axis=0)


def frechet_r2(Y, fitted, kind) -> float:
    """Share of Frechet variance explained: 1 - sum d^2(Y, fit) / sum d^2(Y, mean)."""
    from .fsi import mean_squared_distance

    Y = np.asarray(Y, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    if Y.shape != fitted.shape:
        raise ValueError("responses and fitted objects must align")
    n = Y.shape[0]
    mean = kind.frechet_mean(Y, np.ones(n))
    denom = n * mean_squared_distance(kind, Y, np.asarray([mean] * n))
    if denom <= 0:
        raise ValueError("zero Frechet variance: all responses identical")
    num = n * mean_squared_distance(kind, Y, fitted)
    return 1.0 - num / denom


# ---------------------------------------------------------------------------
# Model wrappers for comparison and splitting
# ---------------------------------------------------------------------------

class GlobalFrechetModel:
    """Weighted-mean generalization of the linear fit; no bandwidth."""

    name = "GF"

    def fit_predict(self, train: RegressionDataset, X_eval) -> np.ndarray:
        X_eval = np.atleast_2d(np.asarray(X_eval, dtype=float))
        out = []
        for x in X_eval:
            w = global_frechet_weights(train.X, x)
            out.append(train.kind.frechet_mean(train.Y, w))
        return np.asarray(out)


class LocalFrechetModel:
    """Kernel-local fit on one covariate at a fixed bandwidth."""

    def __init__(self, covariate: int, label: str, h: float, kernel: Kernel):
        self.covariate = covariate
        self.name = f"LF-{label}"
        self.h = h
        self.kernel = kernel

    def fit_predict(self, train: RegressionDataset, X_eval) -> np.ndarray:
        X_eval = np.atleast_2d(np.asarray(X_eval, dtype=float))
        u = train.X[:, self.covariate]
        out = []
        for x in X_eval:
            lw = scalar_local_weights(u, x[self.covariate], self.h, self.kernel)
            out.append(train.kind.frechet_mean(train.Y, lw.weights))
        return np.asarray(out)


class FsiModel:
    """Single-index fit re-estimated on each training set at a fixed bandwidth."""

    name = "FSI"

    def __init__(self, config: FsiConfig, h: float):
        self.config = replace(config, bandwidths=[float(h)])
        self.h = float(h)

    def fit_predict(self, train: RegressionDataset, X_eval) -> np.ndarray:
        starts = generate_starts(train.p, self.config)
        bf = fit_theta_for_bandwidth(train, self.h, starts, self.config)
        if not bf.feasible:
            raise InfeasibleFit(f"index fit infeasible at h={self.h:.4g}")
        kernel = self.config.resolved_kernel()
        X_eval = np.atleast_2d(np.asarray(X_eval, dtype=float))
        out = []
        for x in X_eval:
            fit = local_frechet_at(train, x, bf.theta, self.h, kernel)
            out.append(fit.point)
        return np.asarray(out)


class FrechetMeanModel:
    """Null model: always predicts the training sample's Frechet mean."""

    name = "MEAN"

    def fit_predict(self, train: RegressionDataset, X_eval) -> np.ndarray:
        X_eval = np.atleast_2d(np.asarray(X_eval, dtype=float))
        mean = train.kind.frechet_mean(train.Y, np.ones(train.n))
        return np.asarray([mean] * X_eval.shape[0])


@dataclass
class ModelComparison:
    """Per-model fit metrics: R^2, split MSPEs, selected bandwidths."""

    model_names: list
    r2: dict = field(default_factory=dict)
    h_star: dict = field(default_factory=dict)
    mspe: dict = field(default_factory=dict)          # model -> list of per-split values
    failed_splits: dict = field(default_factory=dict)

    def mspe_mean(self, name):
        vals = self.mspe.get(name, [])
        return float(np.mean(vals)) if vals else None

    def mspe_sd(self, name):
        vals = self.mspe.get(name, [])
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0


def mspe_splits(data: RegressionDataset, models: Sequence, n_splits: int,
                test_size: int, seed: int = 0) -> ModelComparison:
    """Random train/test splits scored by mean squared prediction distance.

    Each model is refit on every training portion; a model failing on a split
    has that split excluded and counted.  Splits are seeded and identical
    across runs.
    """
    if not 0 < test_size < data.n:
        raise ValueError("test size must be in (0, n)")
    comp = ModelComparison(model_names=[m.name for m in models])
    for m in models:
        comp.mspe[m.name] = []
        comp.failed_splits[m.name] = 0
    rng = np.random.default_rng(seed)
    for _ in range(n_splits):
        perm = rng.permutation(data.n)
        test_idx = np.sort(perm[:test_size])
        train_idx = np.sort(perm[test_size:])
        train = data.subset(train_idx)
        X_test = data.X[test_idx]
        for m in models:
            try:
                preds = m.fit_predict(train, X_test)
            except (_FIT_ERRORS + (ValueError,)):
                comp.failed_splits[m.name] += 1
                continue
            d2 = [data.kind.squared_distances(data.Y[i][None, ...], preds[j])[0]
                  for j, i in enumerate(test_idx)]
            comp.mspe[m.name].append(float(np.mean(d2)))
    return comp


# ---------------------------------------------------------------------------
# End-to-end pipeline
# ---------------------------------------------------------------------------

@dataclass
class MortalityConfig:
    age_range: tuple = DEFAULT_AGE_RANGE
    n_levels: int = DEFAULT_N_LEVELS
    smoothing_bw: object = "auto"
    covariates: tuple = DEFAULT_COVARIATES
    n_bandwidths: int = 10
    splits: int = 30
    test_size: int = 10
    seed: int = 0
    kernel: str = "gaussian"
    fsi: FsiConfig = field(default_factory=lambda: FsiConfig(start_mode="lattice"))
    whatif_points: int = 9


@dataclass
class PipelineResult:
    units: list
    dataset: RegressionDataset
    comparison: ModelComparison
    fsi_fit: FsiFit
    fitted: dict            # model name -> (n, M) fitted quantile values
    whatif: list            # rows: (covariate, value, level, quantile)
    covariate_names: tuple


def load_covariates(path, covariates=DEFAULT_COVARIATES):
    """Covariates CSV -> (units, X).  First column is the unit id."""
    units, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError("covariates file is empty")
        cols = [c for c in reader.fieldnames if c != "unit"]
        missing = [c for c in covariates if c not in cols]
        if missing:
            raise ValueError(f"covariates file lacks columns {missing}")
        for row in reader:
            units.append(row["unit"])
            rows.append([float(row[c]) if row[c] not in ("", None) else np.nan
                         for c in covariates])
    return units, np.asarray(rows, dtype=float)


def run_mortality_pipeline(lifetable_dir, covariates_file,
                           config: MortalityConfig = None) -> PipelineResult:
    """Ingest lifetables + covariates, fit all seven models, compare them."""
    config = config or MortalityConfig()
    kernel = get_kernel(config.kernel)
    units_all, X_raw = load_covariates(covariates_file, config.covariates)

    lifetable_dir = Path(lifetable_dir)
    units, X_rows, quantiles = [], [], []
    levels = default_levels(config.n_levels)
    for unit, xrow in zip(units_all, X_raw):
        path = lifetable_dir / f"{unit}.csv"
        if not path.exists():
            warnings.warn(f"unit {unit}: no lifetable file, dropped")
            continue
        if not np.all(np.isfinite(xrow)):
            warnings.warn(f"unit {unit}: missing covariates, dropped")
            continue
        lt = read_lifetable(path, unit)
        quantiles.append(lifetable_to_quantile(lt, config.age_range, levels,
                                               config.smoothing_bw))
        units.append(unit)
        X_rows.append(xrow)
    if len(units) < 10:
        raise ValueError(f"only {len(units)} usable units; need at least 10")

    X, record = standardize(np.asarray(X_rows))
    kind = Wasserstein1D(levels)
    Y = np.vstack([q.values for q in quantiles])
    data = RegressionDataset(X=X, Y=Y, kind=kind, standardization=record)

    comp = ModelComparison(model_names=[])
    models = []

    # global Frechet
    gf = GlobalFrechetModel()
    models.append(gf)
    fitted = {gf.name: gf.fit_predict(data, data.X)}
    comp.h_star[gf.name] = None

    # one local Frechet fit per covariate
    for j, label in enumerate(config.covariates):
        grid = default_bandwidth_grid(data.X[:, [j]], config.n_bandwidths)
        sub = RegressionDataset(X=data.X[:, [j]], Y=data.Y, kind=kind)
        sel = loocv_bandwidth(sub, "local_frechet", grid, kernel, theta=np.array([1.0]))
        model = LocalFrechetModel(j, label.upper(), sel.h_star, kernel)
        models.append(model)
        fitted[model.name] = model.fit_predict(data, data.X)
        comp.h_star[model.name] = sel.h_star

    # the single-index fit (lattice starts, LOOCV bandwidth)
    fsi_cfg = replace(config.fsi, kernel=config.kernel,
                      n_bandwidths=config.n_bandwidths)
    fsi_fit = fit_fsi(data, fsi_cfg)
    fsi_model = FsiModel(fsi_cfg, fsi_fit.h_star)
    models.append(fsi_model)
    fitted[fsi_model.name] = fsi_fit.fitted
    comp.h_star[fsi_model.name] = fsi_fit.h_star

    comp.model_names = [m.name for m in models]
    for m in models:
        comp.r2[m.name] = frechet_r2(data.Y, fitted[m.name], kind)

    if config.splits > 0:
        split_comp = mspe_splits(data, models, config.splits, config.test_size,
                                 config.seed)
        comp.mspe = split_comp.mspe
        comp.failed_splits = split_comp.failed_splits

    whatif = _whatif_rows(data, fsi_fit, kernel, config, levels)
    return PipelineResult(units=units, dataset=data, comparison=comp,
                          fsi_fit=fsi_fit, fitted=fitted, whatif=whatif,
                          covariate_names=tuple(config.covariates))


def _whatif_rows(data, fsi_fit, kernel, config, levels):
    """Fitted quantiles while sweeping one covariate, others held at medians."""
    rows = []
    medians = np.median(data.X, axis=0)
    for j, label in enumerate(config.covariates):
        lo, hi = data.X[:, j].min(), data.X[:, j].max()
        for v in np.linspace(lo, hi, config.whatif_points):
            x = medians.copy()
            x[j] = v
            fit = local_frechet_at(data, x, fsi_fit.theta_hat, fsi_fit.h_star, kernel)
            for t, q in zip(levels, fit.point):
                rows.append((label, float(v), float(t), float(q)))
    return rows
