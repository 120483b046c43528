"""Single-index Frechet regression: index criterion, multi-start fit, bandwidth choice.

The index coefficient lives on the unit sphere with its first nonzero entry
positive; optimization runs unconstrained in hyperspherical angles.  For each
bandwidth a two-stage search estimates the index: a pool of starting angles
is screened (on sphere responses, by first refining a fast projected-fit
proxy of the criterion), and the survivors are polished with Nelder-Mead on
the exact criterion.  The bandwidth is then chosen by leave-one-out
cross-validation of the smoothing stage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .geometry import Euclidean1D, Sphere, SphereSolverError, Wasserstein1D, pav, \
    sphere_frechet_mean_batch
from .regression import RegressionDataset, FittedObject, local_frechet_at
from .smoothing import (
    DegenerateWindow,
    Kernel,
    get_kernel,
    local_weight_matrix,
    local_weight_matrix_with_kernel,
    loo_local_weight_matrix,
    multivariate_local_weights,
)


class InfeasibleFit(RuntimeError):
    """A (theta, h) pair produced no usable fit."""


_FIT_ERRORS = (DegenerateWindow, SphereSolverError, InfeasibleFit)


# ---------------------------------------------------------------------------
# Index parameterization
# ---------------------------------------------------------------------------

def polar_to_theta(eta) -> np.ndarray:
    """Hyperspherical angles -> unit vector with nonnegative first component.

    theta_1 = prod(cos eta_j); theta_k = sin(eta_{k-1}) prod_{j>=k}(cos eta_j);
    theta_p = sin(eta_{p-1}).  Angles must lie in [-pi/2, pi/2].
    """
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if eta.ndim != 1:
        raise ValueError("eta must be a vector of angles")
    if np.any(np.abs(eta) > np.pi / 2 + 1e-12):
        raise ValueError("angles must lie in [-pi/2, pi/2]")
    cos = np.cos(eta)
    sin = np.sin(eta)
    # suffix[k] = prod of cos(eta_j) for j >= k
    suffix = np.concatenate([np.cumprod(cos[::-1])[::-1], [1.0]])
    p = eta.size + 1
    theta = np.empty(p)
    theta[0] = suffix[0]
    for k in range(1, p):
        theta[k] = sin[k - 1] * suffix[k]
    return theta / np.linalg.norm(theta)


def theta_to_polar(theta) -> np.ndarray:
    """Inverse of polar_to_theta for unit vectors with theta_1 >= 0."""
    theta = np.asarray(theta, dtype=float)
    p = theta.size
    if p < 2:
        raise ValueError("need at least 2 components")
    if theta[0] < -1e-12:
        raise ValueError("polar representation requires a nonnegative first component")
    partial = np.sqrt(np.cumsum(theta * theta))  # partial[k-1] = ||theta_1..k||
    eta = np.empty(p - 1)
    for k in range(2, p + 1):
        s = partial[k - 1]
        ratio = 0.0 if s == 0 else np.clip(theta[k - 1] / s, -1.0, 1.0)
        eta[k - 2] = math.asin(ratio)
    return eta


def normalize_identifiable(v) -> "IndexParam":
    """Scale to unit norm and flip sign so the first nonzero entry is positive."""
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0 or not np.all(np.isfinite(v)):
        raise ValueError("cannot normalize the zero (or non-finite) vector")
    theta = v / nrm
    nz = np.flatnonzero(theta)
    if theta[nz[0]] < 0:
        theta = -theta
    theta = theta + 0.0  # canonicalize -0.0 entries
    return IndexParam(theta=theta, eta=theta_to_polar(theta))


@dataclass(frozen=True)
class IndexParam:
    """Unit-norm index coefficient with its hyperspherical angle representation."""

    theta: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        eta = np.array(self.eta, dtype=float)
        if abs(np.linalg.norm(theta) - 1.0) > 1e-10:
            raise ValueError("theta must be unit norm")
        nz = np.flatnonzero(theta)
        if nz.size and theta[nz[0]] < 0:
            raise ValueError("first nonzero component of theta must be positive")
        if np.linalg.norm(polar_to_theta(eta) - theta) > 1e-10:
            raise ValueError("eta does not reproduce theta")
        theta.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "eta", eta)

    @classmethod
    def from_vector(cls, v) -> "IndexParam":
        return normalize_identifiable(v)

    @classmethod
    def from_angles(cls, eta) -> "IndexParam":
        theta = polar_to_theta(eta)
        return cls(theta=theta, eta=np.atleast_1d(np.asarray(eta, dtype=float)))

    @property
    def p(self) -> int:
        return self.theta.size


# ---------------------------------------------------------------------------
# Criterion and fitted objects
# ---------------------------------------------------------------------------

def _theta_vector(theta) -> np.ndarray:
    return np.asarray(getattr(theta, "theta", theta), dtype=float)


def _loo_nw_inits(Y, kap) -> np.ndarray:
    """Leave-one-out kernel-mean warm starts for all in-sample sphere fits.

    kap: nonnegative kernel weights, kap[i, j] ~ K((u_j - u_i)/h); a copy is
    made before zeroing the diagonal.
    """
    kap = np.array(kap, dtype=float)
    np.fill_diagonal(kap, 0.0)
    E = kap @ Y
    nrm = np.linalg.norm(E, axis=1)
    weak = nrm < 1e-12
    if np.any(weak):
        others = Y.sum(axis=0)[None, :] - Y
        E = np.where(weak[:, None], others, E)
        nrm = np.linalg.norm(E, axis=1)
        if np.any(nrm < 1e-12):
            raise InfeasibleFit("warm start direction vanishes")
    return E / nrm[:, None]


def fsi_fitted(data: RegressionDataset, theta, h, kernel: Kernel,
               grad_tol: float = 1e-10, init=None) -> np.ndarray:
    """In-sample fitted objects of the index model at every observation."""
    theta = _theta_vector(theta)
    u = data.X @ theta
    R, kh = local_weight_matrix_with_kernel(u, h, kernel)
    n = data.n
    kind = data.kind
    if isinstance(kind, Euclidean1D):
        return (R @ data.Y) / n
    if isinstance(kind, Wasserstein1D):
        F = (R @ data.Y) / n
        return np.vstack([pav(row) for row in F])
    if isinstance(kind, Sphere):
        if init is not None:
            # cached warm starts get a short budget; fall back to the
            # kernel-mean starts with the full budget if they mislead
            try:
                pts, _ = sphere_frechet_mean_batch(data.Y, R, init,
                                                   grad_tol=grad_tol, max_iter=80)
                return pts
            except SphereSolverError:
                pass
        pts, _ = sphere_frechet_mean_batch(data.Y, R, _loo_nw_inits(data.Y, kh),
                                           grad_tol=grad_tol)
        return pts
    raise TypeError(f"unsupported geometry {kind!r}")


def mean_squared_distance(kind, Y, fitted) -> float:
    if isinstance(kind, Euclidean1D):
        return float(np.mean((np.asarray(Y, float) - np.asarray(fitted, float)) ** 2))
    if isinstance(kind, Wasserstein1D):
        diff2 = (np.asarray(Y, float) - np.asarray(fitted, float)) ** 2
        return float(np.mean(np.maximum(np.trapezoid(diff2, kind.grid, axis=1), 0.0)))
    if isinstance(kind, Sphere):
        dots = np.clip(np.sum(np.asarray(Y, float) * np.asarray(fitted, float), axis=1), -1.0, 1.0)
        return float(np.mean(np.arccos(dots) ** 2))
    raise TypeError(f"unsupported geometry {kind!r}")


def wn_criterion(data: RegressionDataset, theta, h, kernel: Kernel = None,
                 grad_tol: float = 1e-10) -> float:
    """Mean squared distance between responses and their in-sample index fits."""
    kernel = kernel or get_kernel("gaussian")
    fitted = fsi_fitted(data, theta, h, kernel, grad_tol=grad_tol)
    return mean_squared_distance(data.kind, data.Y, fitted)


def wn_proxy_sphere(data: RegressionDataset, theta, h, kernel: Kernel = None) -> float:
    """Fast sphere criterion: score the sphere-projected Euclidean local fits."""
    if not isinstance(data.kind, Sphere):
        raise ValueError("the projected-fit proxy applies to sphere responses only")
    kernel = kernel or get_kernel("gaussian")
    theta = _theta_vector(theta)
    u = data.X @ theta
    R = local_weight_matrix(u, h, kernel)
    E = R @ data.Y
    nrm = np.linalg.norm(E, axis=1)
    if np.any(nrm < 1e-12):
        raise InfeasibleFit("zero-norm projected fit")
    P = E / nrm[:, None]
    dots = np.clip(np.sum(data.Y * P, axis=1), -1.0, 1.0)
    return float(np.mean(np.arccos(dots) ** 2))


# ---------------------------------------------------------------------------
# Multi-start estimation
# ---------------------------------------------------------------------------

def default_n_starts(p: int) -> int:
    return 10 if p == 2 else 10 * p


def default_n_keep(p: int) -> int:
    return max(2, math.ceil(p / 2))


@dataclass
class FsiConfig:
    """Settings for the index fit.

    bandwidths: explicit grid, or None to derive one from the projected
    pairwise predictor spacings.  start_mode 'random' draws uniform angles
    (seeded); 'lattice' uses the 3^(p-1) grid over {-pi/4, 0, pi/4}.
    """

    bandwidths: Optional[Sequence[float]] = None
    n_bandwidths: int = 10
    n_starts: Optional[int] = None
    n_keep: Optional[int] = None
    seed: int = 0
    kernel: str = "gaussian"
    start_mode: str = "random"
    loocv_refit_theta: bool = False
    solver_grad_tol: float = 1e-10
    nm_xatol: float = 1e-4
    nm_simplex_edge: float = 0.1
    nm_max_evals: Optional[int] = None  # default 200 * (p - 1)

    def resolved_kernel(self) -> Kernel:
        return get_kernel(self.kernel)


@dataclass(frozen=True)
class StartRecord:
    start_index: int
    eta0: tuple
    stage1_value: float
    selected: bool
    eta_final: Optional[tuple] = None
    wn_final: Optional[float] = None


@dataclass(frozen=True)
class BandwidthFit:
    h: float
    theta: Optional[IndexParam]
    criterion: float
    trace: tuple
    feasible: bool


@dataclass(frozen=True)
class FsiFit:
    """Result of the full index fit: coefficient, bandwidth, fitted objects."""

    theta_hat: IndexParam
    h_star: float
    criterion: float
    fitted: np.ndarray
    per_h: tuple
    loocv_scores: dict
    kernel: str = "gaussian"

    @property
    def trace(self):
        return tuple(r for bf in self.per_h for r in bf.trace)


def generate_starts(p: int, config: FsiConfig) -> np.ndarray:
    """Starting angle vectors, shape (K, p-1)."""
    if p < 2:
        raise ValueError("index estimation needs p >= 2")
    if config.start_mode == "lattice":
        axes = [np.array([-np.pi / 4, 0.0, np.pi / 4])] * (p - 1)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    if config.start_mode != "random":
        raise ValueError("start_mode must be 'random' or 'lattice'")
    k = config.n_starts or default_n_starts(p)
    rng = np.random.default_rng(config.seed)
    return rng.uniform(-np.pi / 2, np.pi / 2, size=(k, p - 1))


def default_bandwidth_grid(X, n_bandwidths: int = 10) -> np.ndarray:
    """Log-spaced grid between the 5th and 50th percentile of pairwise
    projected-predictor spacings along the leading principal direction."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Xc = X - X.mean(axis=0)
    cov = np.atleast_2d(Xc.T @ Xc / X.shape[0])
    vals, vecs = np.linalg.eigh(cov)
    pilot = vecs[:, -1]
    u = X @ pilot
    diffs = np.abs(u[:, None] - u[None, :])[np.triu_indices(u.size, k=1)]
    diffs = diffs[diffs > 0]
    if diffs.size == 0:
        raise ValueError("all projected predictors coincide; no bandwidth scale")
    lo, hi = np.percentile(diffs, [5.0, 50.0])
    lo = max(lo, 1e-3 * hi)
    if not hi > 0:
        raise ValueError("degenerate pairwise spacing")
    return np.geomspace(lo, hi, n_bandwidths)


def _initial_simplex(eta0, edge):
    k = eta0.size
    simplex = np.tile(eta0, (k + 1, 1))
    for j in range(k):
        step = edge if eta0[j] + edge <= np.pi / 2 else -edge
        simplex[j + 1, j] += step
    return simplex


def _nelder_mead(objective, eta0, config: FsiConfig, p: int):
    maxfev = config.nm_max_evals or 200 * (p - 1)
    res = minimize(
        objective,
        x0=eta0,
        method="Nelder-Mead",
        bounds=[(-np.pi / 2, np.pi / 2)] * (p - 1),
        options=dict(
            initial_simplex=_initial_simplex(eta0, config.nm_simplex_edge),
            xatol=config.nm_xatol,
            fatol=float("inf"),
            maxfev=maxfev,
        ),
    )
    return np.clip(res.x, -np.pi / 2, np.pi / 2), float(res.fun)


def _best_index(values, tol=1e-12):
    """Lowest index whose value is within tol of the minimum (deterministic ties)."""
    values = np.asarray(values, dtype=float)
    m = np.nanmin(values)
    return int(np.flatnonzero(values <= m + tol)[0])


def fit_theta_for_bandwidth(data: RegressionDataset, h: float, starts,
                            config: FsiConfig) -> BandwidthFit:
    """Two-stage multi-start index estimate at a single bandwidth."""
    kernel = config.resolved_kernel()
    p = data.p
    n_keep = config.n_keep or default_n_keep(p)
    is_sphere = isinstance(data.kind, Sphere)

    # consecutive criterion evaluations within one Nelder-Mead run reuse the
    # previous fitted points as sphere warm starts (the fallback inside
    # fsi_fitted restores the kernel-mean start if the cache ever misleads)
    cache = {"fitted": None}

    def wn_at(eta):
        try:
            fitted = fsi_fitted(data, polar_to_theta(eta), h, kernel,
                                grad_tol=config.solver_grad_tol,
                                init=cache["fitted"] if is_sphere else None)
            if is_sphere:
                cache["fitted"] = fitted
            return mean_squared_distance(data.kind, data.Y, fitted)
        except _FIT_ERRORS:
            return np.inf

    def proxy_at(eta):
        try:
            return wn_proxy_sphere(data, polar_to_theta(eta), h, kernel)
        except _FIT_ERRORS:
            return np.inf

    stage1_eta = []
    stage1_val = []
    for eta0 in starts:
        if is_sphere:
            eta_ref, val = _nelder_mead(proxy_at, np.asarray(eta0, float), config, p)
        else:
            eta_ref, val = np.asarray(eta0, float), wn_at(eta0)
        stage1_eta.append(eta_ref)
        stage1_val.append(val)

    order = np.argsort(stage1_val, kind="stable")
    retained = [int(i) for i in order[:n_keep] if np.isfinite(stage1_val[i])]

    records = {}
    finals = []
    for k in retained:
        cache["fitted"] = None
        eta_fin, wn_fin = _nelder_mead(wn_at, stage1_eta[k], config, p)
        finals.append((k, eta_fin, wn_fin))
        records[k] = (eta_fin, wn_fin)

    trace = tuple(
        StartRecord(
            start_index=i,
            eta0=tuple(np.asarray(starts[i], float)),
            stage1_value=float(stage1_val[i]),
            selected=i in records,
            eta_final=tuple(records[i][0]) if i in records else None,
            wn_final=float(records[i][1]) if i in records else None,
        )
        for i in range(len(starts))
    )

    feasible = [f for f in finals if np.isfinite(f[2])]
    if not feasible:
        return BandwidthFit(h=float(h), theta=None, criterion=np.inf,
                            trace=trace, feasible=False)
    best = feasible[_best_index([f[2] for f in feasible])]
    theta_hat = normalize_identifiable(polar_to_theta(best[1]))
    try:
        criterion = wn_criterion(data, theta_hat, h, kernel,
                                 grad_tol=config.solver_grad_tol)
    except _FIT_ERRORS:
        return BandwidthFit(h=float(h), theta=None, criterion=np.inf,
                            trace=trace, feasible=False)
    return BandwidthFit(h=float(h), theta=theta_hat, criterion=float(criterion),
                        trace=trace, feasible=True)


def fit_fsi_bandwidths(data: RegressionDataset, config: FsiConfig,
                       starts=None) -> list[BandwidthFit]:
    """Index estimates across the bandwidth grid (no bandwidth selection)."""
    if data.p < 2:
        raise ValueError(
            "with a single covariate the index is fixed at 1; "
            "use local Frechet regression directly (index estimation needs p >= 2)"
        )
    if data.n < 10:
        raise ValueError("need at least 10 observations")
    if starts is None:
        starts = generate_starts(data.p, config)
    grid = config.bandwidths
    if grid is None:
        grid = default_bandwidth_grid(data.X, config.n_bandwidths)
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise ValueError("bandwidth grid is empty")
    return [fit_theta_for_bandwidth(data, h, starts, config) for h in grid]


# ---------------------------------------------------------------------------
# Leave-one-out bandwidth selection
# ---------------------------------------------------------------------------

def _loo_squared_errors_projected(data: RegressionDataset, theta, h, kernel,
                                  grad_tol=1e-10) -> np.ndarray:
    """Held-out squared distances of leave-one-out local fits at each X_i."""
    theta = _theta_vector(theta)
    u = data.X @ theta
    R = loo_local_weight_matrix(u, h, kernel)
    n = data.n
    kind = data.kind
    if isinstance(kind, Euclidean1D):
        fitted = (R @ data.Y) / (n - 1)
        return (data.Y - fitted) ** 2
    if isinstance(kind, Wasserstein1D):
        F = (R @ data.Y) / (n - 1)
        fitted = np.vstack([pav(row) for row in F])
        diff2 = (data.Y - fitted) ** 2
        return np.maximum(np.trapezoid(diff2, kind.grid, axis=1), 0.0)
    if isinstance(kind, Sphere):
        offs = u[None, :] - u[:, None]
        init = _loo_nw_inits(data.Y, kernel(offs / h))
        pts, _ = sphere_frechet_mean_batch(data.Y, R, init, grad_tol=grad_tol)
        dots = np.clip(np.sum(data.Y * pts, axis=1), -1.0, 1.0)
        return np.arccos(dots) ** 2
    raise TypeError(f"unsupported geometry {kind!r}")


def _loo_squared_errors_mlf(data: RegressionDataset, h, kernel,
                            grad_tol=1e-10) -> np.ndarray:
    n = data.n
    W = np.zeros((n, n))
    for i in range(n):
        keep = np.arange(n) != i
        W[i, keep] = multivariate_local_weights(data.X[keep], data.X[i], h, kernel)
    kind = data.kind
    if isinstance(kind, Euclidean1D):
        fitted = (W @ data.Y) / (n - 1)
        return (data.Y - fitted) ** 2
    if isinstance(kind, Wasserstein1D):
        F = (W @ data.Y) / (n - 1)
        fitted = np.vstack([pav(row) for row in F])
        diff2 = (data.Y - fitted) ** 2
        return np.maximum(np.trapezoid(diff2, kind.grid, axis=1), 0.0)
    if isinstance(kind, Sphere):
        kap = np.prod(kernel((data.X[None, :, :] - data.X[:, None, :]) / h), axis=2)
        np.fill_diagonal(kap, 0.0)
        E = kap @ data.Y
        nrm = np.linalg.norm(E, axis=1)
        weak = nrm < 1e-12
        if np.any(weak):
            others = data.Y.sum(axis=0)[None, :] - data.Y
            E = np.where(weak[:, None], others, E)
            nrm = np.linalg.norm(E, axis=1)
        init = E / nrm[:, None]
        pts, _ = sphere_frechet_mean_batch(data.Y, W, init, grad_tol=grad_tol)
        dots = np.clip(np.sum(data.Y * pts, axis=1), -1.0, 1.0)
        return np.arccos(dots) ** 2
    raise TypeError(f"unsupported geometry {kind!r}")


@dataclass(frozen=True)
class LoocvResult:
    h_star: float
    scores: dict


def loocv_bandwidth(data: RegressionDataset, model: str, grid, kernel: Kernel = None,
                    theta=None, config: Optional[FsiConfig] = None,
                    per_h: Optional[Sequence[BandwidthFit]] = None) -> LoocvResult:
    """Choose a bandwidth by leave-one-out prediction error.

    model: 'local_frechet' (needs theta), 'mlf', or 'fsi' (needs config; the
    index is estimated once per bandwidth on the full sample, and only the
    smoothing stage is refit leave-one-out, unless config.loocv_refit_theta).
    Infeasible bandwidths are skipped; ties go to the larger bandwidth.
    """
    kernel = kernel or get_kernel("gaussian")
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise ValueError("bandwidth grid is empty")
    if data.n < 3:
        raise ValueError("need at least 3 observations for leave-one-out")
    order = np.argsort(grid, kind="stable")
    scores = {}
    if model == "fsi":
        if config is None:
            raise ValueError("model 'fsi' needs a config")
        if per_h is None:
            per_h = fit_fsi_bandwidths(data, replace(config, bandwidths=list(grid[order])))
        by_h = {bf.h: bf for bf in per_h}
    for h in grid[order]:
        try:
            if model == "local_frechet":
                if theta is None:
                    raise ValueError("model 'local_frechet' needs theta")
                errs = _loo_squared_errors_projected(data, theta, h, kernel)
            elif model == "mlf":
                errs = _loo_squared_errors_mlf(data, h, kernel)
            elif model == "fsi":
                bf = by_h[float(h)]
                if not bf.feasible:
                    continue
                if config.loocv_refit_theta:
                    errs = _loo_errors_fsi_refit(data, h, config)
                else:
                    errs = _loo_squared_errors_projected(
                        data, bf.theta, h, kernel, grad_tol=config.solver_grad_tol)
            else:
                raise ValueError(f"unknown model {model!r}")
        except _FIT_ERRORS:
            continue
        scores[float(h)] = float(errs.sum())
    if not scores:
        raise InfeasibleFit("every bandwidth in the grid was infeasible")
    best_h, best_score = None, np.inf
    for h in sorted(scores):
        if scores[h] <= best_score:
            best_h, best_score = h, scores[h]
    return LoocvResult(h_star=best_h, scores=scores)


def _loo_errors_fsi_refit(data: RegressionDataset, h, config: FsiConfig) -> np.ndarray:
    """Exact (expensive) LOOCV: the index is re-estimated for every held-out point."""
    kernel = config.resolved_kernel()
    errs = np.empty(data.n)
    starts = generate_starts(data.p, config)
    for i in range(data.n):
        keep = np.arange(data.n) != i
        sub = data.subset(keep)
        bf = fit_theta_for_bandwidth(sub, h, starts, config)
        if not bf.feasible:
            raise InfeasibleFit(f"held-out refit infeasible at observation {i}")
        fit = local_frechet_at(sub, data.X[i], bf.theta, h, kernel)
        if isinstance(data.kind, Euclidean1D):
            errs[i] = (data.Y[i] - fit.point) ** 2
        else:
            errs[i] = data.kind.squared_distances(data.Y[i][None, :], fit.point)[0]
    return errs


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def fit_fsi(data: RegressionDataset, config: FsiConfig, starts=None) -> FsiFit:
    """Estimate the index over the bandwidth grid, select h by LOOCV, and fit."""
    kernel = config.resolved_kernel()
    per_h = fit_fsi_bandwidths(data, config, starts=starts)
    if not any(bf.feasible for bf in per_h):
        worst = "; ".join(f"h={bf.h:.4g}" for bf in per_h)
        raise InfeasibleFit(f"no feasible (theta, h) pair on the grid ({worst})")
    grid = [bf.h for bf in per_h if bf.feasible]
    sel = loocv_bandwidth(data, "fsi", grid, kernel, config=config, per_h=per_h)
    chosen = next(bf for bf in per_h if bf.h == sel.h_star)
    fitted = fsi_fitted(data, chosen.theta, chosen.h, kernel,
                        grad_tol=config.solver_grad_tol)
    return FsiFit(
        theta_hat=chosen.theta,
        h_star=chosen.h,
        criterion=chosen.criterion,
        fitted=fitted,
        per_h=tuple(per_h),
        loocv_scores=sel.scores,
        kernel=config.kernel,
    )


def predict(fit: FsiFit, data: RegressionDataset, x_new, kernel: Kernel = None) -> FittedObject:
    """Fitted object at a new covariate value using the selected index,
    bandwidth, and kernel of the fit."""
    import warnings

    kernel = kernel or get_kernel(fit.kernel)
    x_new = np.asarray(x_new, dtype=float)
    u = data.X @ fit.theta_hat.theta
    u_new = float(x_new @ fit.theta_hat.theta)
    if not (u.min() - fit.h_star <= u_new <= u.max() + fit.h_star):
        warnings.warn(
            f"query projection {u_new:.4g} lies more than one bandwidth outside "
            f"the training range [{u.min():.4g}, {u.max():.4g}]",
            stacklevel=2,
        )
    return local_frechet_at(data, x_new, fit.theta_hat, fit.h_star, kernel)
