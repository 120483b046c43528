"""Baseline Frechet regression estimators: local, global, multivariate local.

On Euclidean responses these reduce exactly to local-linear regression, OLS,
and multivariate local-linear regression, which is the main cross-check used
throughout the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    Sphere,
    SphereSolveInfo,
    Wasserstein1D,
    extrinsic_mean_init,
    sphere_frechet_mean,
    weighted_frechet_mean,
)
from .smoothing import (
    Kernel,
    GAUSSIAN,
    multivariate_local_weights,
    projected_local_weights,
)


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.sd


def standardize(X):
    """Center and scale columns to sample mean 0 / sd 1; returns (Xs, record)."""
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=0)
    if np.any(sd <= 0):
        raise ValueError("cannot standardize a constant covariate column")
    rec = Standardization(mean=mean, sd=sd)
    return rec.apply(X), rec


@dataclass
class RegressionDataset:
    """Covariates X (n x p) and stacked responses Y under one geometry."""

    X: np.ndarray
    Y: np.ndarray
    kind: object
    standardization: Optional[Standardization] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Y = np.asarray(self.Y, dtype=float)
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates contain non-finite entries")
        self.X = X
        self.Y = Y

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "RegressionDataset":
        return RegressionDataset(self.X[idx], self.Y[idx], self.kind,
                                 self.standardization)


@dataclass(frozen=True)
class FittedObject:
    """A fitted response-space point plus the achieved weighted criterion."""

    point: object
    criterion_value: float
    diagnostics: Optional[SphereSolveInfo] = None


def _criterion_value(kind, Y, weights, point) -> float:
    if isinstance(kind, (Sphere, Wasserstein1D)):
        d2 = kind.squared_distances(Y, point)
    else:
        d2 = (np.asarray(Y, dtype=float) - point) ** 2
    return float(np.mean(weights * d2))


def _fit_mean(kind, Y, weights, init=None) -> FittedObject:
    info = None
    if isinstance(kind, Sphere):
        point, info = sphere_frechet_mean(Y, weights, init=init)
    else:
        point = weighted_frechet_mean(kind, Y, weights)
    return FittedObject(point=point, criterion_value=_criterion_value(kind, Y, weights, point),
                        diagnostics=info)


def _kernel_init(data: RegressionDataset, kappa) -> np.ndarray:
    """Nadaraya-Watson style warm start: normalized kernel-weighted mean."""
    return extrinsic_mean_init(data.Y, kappa)


def local_frechet_at(data: RegressionDataset, x, theta, h, kernel: Kernel = GAUSSIAN) -> FittedObject:
    """Local Frechet fit at x using the projected predictor theta'X."""
    theta = np.asarray(getattr(theta, "theta", theta), dtype=float)
    lw = projected_local_weights(data.X, x, theta, h, kernel)
    init = None
    if isinstance(data.kind, Sphere):
        proj = (data.X - np.asarray(x, dtype=float)) @ theta
        init = _kernel_init(data, kernel(proj / h))
    return _fit_mean(data.kind, data.Y, lw.weights, init=init)


def global_frechet_weights(X, x) -> np.ndarray:
    """Affine weights 1 + (X_i - mean)' Cov^-1 (x - mean); they average to 1."""
    X = np.asarray(X, dtype=float)
    x = np.asarray(x, dtype=float)
    xbar = X.mean(axis=0)
    Xc = X - xbar
    cov = Xc.T @ Xc / X.shape[0]
    cov = np.atleast_2d(cov)
    try:
        if np.linalg.cond(cov) > 1e12:
            raise np.linalg.LinAlgError
        sol = np.linalg.solve(cov, x - xbar)
    except np.linalg.LinAlgError:
        raise ValueError("singular covariate covariance; global Frechet weights undefined") from None
    return 1.0 + Xc @ sol


def global_frechet_fit(data: RegressionDataset, x) -> FittedObject:
    """Global Frechet fit at x (generalizes the OLS fitted value)."""
    w = global_frechet_weights(data.X, x)
    init = None
    if isinstance(data.kind, Sphere):
        init = extrinsic_mean_init(data.Y, w)
    return _fit_mean(data.kind, data.Y, w, init=init)


def multivariate_local_frechet_at(data: RegressionDataset, x, h, kernel: Kernel = GAUSSIAN) -> FittedObject:
    """Multivariate local Frechet fit at x with a product kernel."""
    w = multivariate_local_weights(data.X, x, h, kernel)
    init = None
    if isinstance(data.kind, Sphere):
        Xc = data.X - np.asarray(x, dtype=float)
        kappa = np.prod(kernel(Xc / h), axis=1)
        init = _kernel_init(data, kappa)
    return _fit_mean(data.kind, data.Y, w, init=init)


def nadaraya_watson_sphere_init(data: RegressionDataset, i: int, theta, h,
                                kernel: Kernel = GAUSSIAN) -> np.ndarray:
    """Leave-one-out kernel-weighted mean of the other responses, projected to S^2.

    Used as the warm start for in-sample sphere fits; when the weighted mean
    cancels to zero the equal-weight mean is used instead.
    """
    if not isinstance(data.kind, Sphere):
        raise ValueError("sphere warm start requires sphere responses")
    theta = np.asarray(getattr(theta, "theta", theta), dtype=float)
    u = data.X @ theta
    kappa = kernel((u[i] - u) / h)
    kappa[i] = 0.0
    if kappa.sum() <= 0:
        raise ValueError(f"no kernel mass around observation {i}")
    v = kappa @ data.Y
    if np.linalg.norm(v) < 1e-12:
        others = np.ones(data.n)
        others[i] = 0.0
        v = others @ data.Y
    nrm = np.linalg.norm(v)
    if nrm < 1e-12:
        raise ValueError("warm start direction vanishes")
    return v / nrm
