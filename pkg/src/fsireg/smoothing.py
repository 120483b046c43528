"""Kernels and equivalent-kernel weights for local-linear smoothing.

The signed weights returned here turn a local-linear fit into a weighted
average of the responses, which is what lets the same machinery drive
metric-space (Frechet) regression: weights depend on the predictors only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# relative floor on sigma^2 = mu0*mu2 - mu1^2 before a window counts as degenerate
DEGENERATE_REL_TOL = 1e-12


class DegenerateWindow(RuntimeError):
    """Local window carries no usable information (bandwidth too small, isolated point)."""


def _gaussian(w):
    return np.exp(-0.5 * w * w) / np.sqrt(2.0 * np.pi)


def _epanechnikov(w):
    out = 0.75 * (1.0 - w * w)
    return np.where(np.abs(w) <= 1.0, out, 0.0)


@dataclass(frozen=True)
class Kernel:
    """Symmetric probability-density kernel. Checked numerically on construction."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    support: float  # half-width of the support; inf for gaussian

    def __post_init__(self):
        half = 10.0 if not np.isfinite(self.support) else self.support
        probe = np.linspace(-half, half, 20001)
        vals = self.fn(probe)
        if not np.allclose(vals, self.fn(-probe), atol=1e-12):
            raise ValueError(f"kernel {self.name} is not symmetric")
        mass = np.trapezoid(vals, probe)
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"kernel {self.name} does not integrate to 1 (got {mass})")

    def __call__(self, w):
        return self.fn(np.asarray(w, dtype=float))


GAUSSIAN = Kernel("gaussian", _gaussian, np.inf)
EPANECHNIKOV = Kernel("epanechnikov", _epanechnikov, 1.0)

_KERNELS = {k.name: k for k in (GAUSSIAN, EPANECHNIKOV)}


def get_kernel(name: str) -> Kernel:
    try:
        return _KERNELS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(_KERNELS)}") from None


@dataclass(frozen=True)
class LocalWeights:
    """Equivalent-kernel weights at one query point plus their moment components.

    weights average to 1 over the sample; sigma2 == mu0*mu2 - mu1^2.
    """

    weights: np.ndarray
    mu0: float
    mu1: float
    mu2: float
    sigma2: float


def local_weights_1d(offsets, h, kernel: Kernel = GAUSSIAN) -> LocalWeights:
    """Weights for a local-linear fit at offset 0, given predictor offsets u_i - u0.

    Moments are accumulated around the kernel-weighted mean offset, which
    avoids the mu0*mu2 - mu1^2 cancellation in nearly empty windows.
    """
    offsets = np.asarray(offsets, dtype=float)
    if offsets.ndim != 1 or offsets.size < 2:
        raise ValueError("need at least 2 observations")
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    kh = kernel(offsets / h) / h
    mu0 = kh.mean()
    mu1 = (kh * offsets).mean()
    if mu0 <= 0:
        raise DegenerateWindow(f"no kernel mass in the window (h={h:.3g})")
    center = mu1 / mu0
    dev = offsets - center
    dev = dev - (kh * dev).mean() / mu0  # compensated re-centering
    mu2c = (kh * dev * dev).mean()  # mu0*mu2c == mu0*mu2 - mu1^2 exactly
    sigma2 = mu0 * mu2c
    if sigma2 <= DEGENERATE_REL_TOL * (mu0 * h) ** 2:
        raise DegenerateWindow(
            f"degenerate local window (sigma2={sigma2:.3g}, mu0={mu0:.3g}, h={h:.3g})"
        )
    # r = K*(mu2 - mu1*u)/sigma2 rewritten as (K/mu0)*(1 - (mu1/mu2c)*dev)
    weights = (kh / mu0) * (1.0 - (mu1 / mu2c) * dev)
    mu2 = mu2c + mu1 * center
    return LocalWeights(weights=weights, mu0=float(mu0), mu1=float(mu1),
                        mu2=float(mu2), sigma2=float(sigma2))


def scalar_local_weights(u, u0, h, kernel: Kernel = GAUSSIAN) -> LocalWeights:
    """Local-linear weights for a scalar predictor sample `u` at query `u0`."""
    u = np.asarray(u, dtype=float)
    return local_weights_1d(u - float(u0), h, kernel)


def projected_local_weights(X, x, theta, h, kernel: Kernel = GAUSSIAN) -> LocalWeights:
    """Local-linear weights on the projected predictor theta'X at query theta'x."""
    X = np.asarray(X, dtype=float)
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return local_weights_1d((X - x) @ theta, h, kernel)


def local_weight_matrix_with_kernel(u, h, kernel: Kernel = GAUSSIAN):
    """All-pairs local-linear weights plus the raw kernel matrix.

    Returns (R, kh) where row i of R holds the weights for query u_i and
    kh[i, j] = K_h(u_j - u_i).  Raises DegenerateWindow naming the first
    offending query index.
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    if n < 2:
        raise ValueError("need at least 2 observations")
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    offs = u[None, :] - u[:, None]  # offs[i, j] = u_j - u_i
    kh = kernel(offs / h) / h
    mu0 = kh.mean(axis=1)
    mu1 = (kh * offs).mean(axis=1)
    if np.any(mu0 <= 0):
        i = int(np.argmax(mu0 <= 0))
        raise DegenerateWindow(f"no kernel mass around observation {i} (h={h:.3g})")
    dev = offs - (mu1 / mu0)[:, None]
    dev = dev - ((kh * dev).mean(axis=1) / mu0)[:, None]
    mu2c = (kh * dev * dev).mean(axis=1)
    sigma2 = mu0 * mu2c
    bad = sigma2 <= DEGENERATE_REL_TOL * (mu0 * h) ** 2
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DegenerateWindow(
            f"degenerate local window at observation {i} (sigma2={sigma2[i]:.3g}, h={h:.3g})"
        )
    return (kh / mu0[:, None]) * (1.0 - (mu1 / mu2c)[:, None] * dev), kh


def local_weight_matrix(u, h, kernel: Kernel = GAUSSIAN) -> np.ndarray:
    """All-pairs local-linear weights: row i holds the weights for query u_i."""
    return local_weight_matrix_with_kernel(u, h, kernel)[0]


def loo_local_weight_matrix(u, h, kernel: Kernel = GAUSSIAN) -> np.ndarray:
    """Leave-one-out version of local_weight_matrix: row i ignores observation i.

    Row i holds weights over the remaining n-1 observations (column i is 0)
    that average to 1 over those n-1 points.
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    if n < 3:
        raise ValueError("need at least 3 observations for leave-one-out weights")
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    offs = u[None, :] - u[:, None]
    kh = kernel(offs / h) / h
    np.fill_diagonal(kh, 0.0)
    m = n - 1
    mu0 = kh.sum(axis=1) / m
    mu1 = (kh * offs).sum(axis=1) / m
    if np.any(mu0 <= 0):
        i = int(np.argmax(mu0 <= 0))
        raise DegenerateWindow(f"no leave-one-out kernel mass at observation {i} (h={h:.3g})")
    dev = offs - (mu1 / mu0)[:, None]
    dev = dev - ((kh * dev).sum(axis=1) / (m * mu0))[:, None]
    mu2c = (kh * dev * dev).sum(axis=1) / m
    sigma2 = mu0 * mu2c
    bad = sigma2 <= DEGENERATE_REL_TOL * (mu0 * h) ** 2
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DegenerateWindow(
            f"degenerate leave-one-out window at observation {i} (h={h:.3g})"
        )
    return (kh / mu0[:, None]) * (1.0 - (mu1 / mu2c)[:, None] * dev)


def multivariate_local_weights(X, x, h, kernel: Kernel = GAUSSIAN) -> np.ndarray:
    """Equivalent-kernel weights of a multivariate local-linear fit at x.

    Product kernel with a common bandwidth per coordinate; the returned
    weights are for the fitted intercept and average to 1.
    """
    X = np.asarray(X, dtype=float)
    x = np.asarray(x, dtype=float)
    n, p = X.shape
    if n <= p + 1:
        raise ValueError("need n > p + 1 observations")
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    Xc = X - x
    kappa = np.prod(kernel(Xc / h) / h, axis=1)
    ksum = kappa.sum()
    if ksum <= 0:
        raise DegenerateWindow("no kernel mass at the query point")
    # center the design at the kernel-weighted predictor mean for conditioning
    xw = (kappa @ Xc) / ksum
    Z = np.hstack([np.ones((n, 1)), Xc - xw])
    A = Z.T @ (kappa[:, None] * Z) / n
    rhs = np.concatenate([[1.0], -xw])  # fitted value at x reads off as [1, -xw]'beta
    try:
        if np.linalg.cond(A) > 1e12:
            raise DegenerateWindow("singular local design matrix")
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        raise DegenerateWindow("singular local design matrix") from None
    return kappa * (Z @ sol)
