"""Response-space geometries: unit sphere S^2, 1-D Wasserstein, Euclidean line.

Each geometry provides a squared-distance-compatible metric and a weighted
Frechet mean solver.  The Euclidean and Wasserstein means are closed form
(the latter via a pool-adjacent-violators projection onto the monotone cone);
the sphere mean is computed by Riemannian gradient descent with Armijo
backtracking, vectorized over many query points at once.

All functions are pure and never mutate their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT_NORM_TOL = 1e-8
ANTIPODAL_DOT_TOL = 1e-10


class SphereSolverError(RuntimeError):
    """Sphere Frechet mean solver failed to reach the gradient tolerance."""


def _as_sphere_point(v, name="point"):
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {v.shape}")
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"{name} is not unit norm (|norm - 1| = {abs(nrm - 1.0):.3g})")
    return v


def sphere_distance(a, b) -> float:
    """Great-circle distance arccos(a.b) in radians, for unit vectors a, b."""
    a = _as_sphere_point(a, "a")
    b = _as_sphere_point(b, "b")
    return float(np.arccos(np.clip(a @ b, -1.0, 1.0)))


def sphere_exp(base, tangent):
    """Exponential map: follow the great circle from `base` along `tangent`.

    `tangent` must be orthogonal to `base`; the zero tangent returns `base`.
    """
    base = _as_sphere_point(base, "base")
    tangent = np.asarray(tangent, dtype=float)
    if tangent.shape != (3,):
        raise ValueError(f"tangent must be a 3-vector, got shape {tangent.shape}")
    nrm = np.linalg.norm(tangent)
    if nrm == 0.0:
        return base.copy()
    if abs(base @ tangent) > UNIT_NORM_TOL * max(1.0, nrm):
        raise ValueError("tangent is not orthogonal to base")
    out = np.cos(nrm) * base + np.sin(nrm) * (tangent / nrm)
    return out / np.linalg.norm(out)


def sphere_log(base, target):
    """Inverse of sphere_exp: the tangent at `base` pointing to `target`.

    Undefined (raises) for antipodal pairs.
    """
    base = _as_sphere_point(base, "base")
    target = _as_sphere_point(target, "target")
    dot = float(np.clip(base @ target, -1.0, 1.0))
    if dot <= -1.0 + ANTIPODAL_DOT_TOL:
        raise ValueError("log map is undefined for antipodal points")
    perp = target - dot * base
    perp_nrm = np.linalg.norm(perp)
    if perp_nrm < 1e-15:
        return np.zeros(3)
    return (np.arccos(dot) / perp_nrm) * perp


def pav(values) -> np.ndarray:
    """Project onto nondecreasing sequences: pool-adjacent-violators, uniform weights.

    Exact L2 projection; input returned (as a copy) when already monotone.
    """
    y = np.asarray(values, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("pav expects a nonempty 1-D array")
    if np.all(np.diff(y) >= 0):
        return y.copy()
    means: list[float] = []
    counts: list[int] = []
    for v in y:
        means.append(float(v))
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, c2 = means.pop(), counts.pop()
            m1, c1 = means.pop(), counts.pop()
            c = c1 + c2
            means.append((m1 * c1 + m2 * c2) / c)
            counts.append(c)
    out = np.repeat(means, counts)
    # guard against fp wiggle at block boundaries
    return np.maximum.accumulate(out)


@dataclass(frozen=True)
class QuantileGrid:
    """A 1-D distribution stored as quantile values on a fixed probability grid.

    grid: strictly increasing levels in [0, 1] with endpoints 0 and 1.
    values: nondecreasing quantile values (same length, units of the variable).
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        values = np.array(self.values, dtype=float)
        if grid.ndim != 1 or values.ndim != 1 or grid.size != values.size:
            raise ValueError("grid and values must be 1-D arrays of equal length")
        if grid.size < 2:
            raise ValueError("need at least 2 grid points")
        if grid[0] != 0.0 or grid[-1] != 1.0:
            raise ValueError("grid must start at 0 and end at 1")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("quantile values must be finite")
        if np.any(np.diff(values) < 0):
            raise ValueError("quantile values must be nondecreasing")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.grid.size


def wasserstein_distance(g1: QuantileGrid, g2: QuantileGrid) -> float:
    """L2 distance between quantile functions, trapezoidal quadrature on the shared grid."""
    if not np.array_equal(g1.grid, g2.grid):
        raise ValueError("quantile grids do not match")
    diff2 = (g1.values - g2.values) ** 2
    return float(np.sqrt(np.trapezoid(diff2, g1.grid)))


@dataclass(frozen=True)
class SphereSolveInfo:
    iterations: int
    grad_norm: float  # achieved ||sum_i w_i log_omega(y_i)||
    objective: float
    converged: bool


def _batch_objective(omega, Y, Wn):
    dots = np.clip(omega @ Y.T, -1.0, 1.0)
    theta = np.arccos(dots)
    return (Wn * theta * theta).sum(axis=1)


def _batch_exp(base, tangent):
    """Row-wise exponential map with re-projection to the sphere."""
    # drop any numerical drift of the tangent off the tangent plane
    tangent = tangent - (tangent * base).sum(axis=1, keepdims=True) * base
    nrm = np.linalg.norm(tangent, axis=1, keepdims=True)
    small = nrm < 1e-300
    direction = np.where(small, 0.0, tangent / np.where(small, 1.0, nrm))
    out = np.cos(nrm) * base + np.sin(nrm) * direction
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def _tangent_frames(omega):
    """Orthonormal tangent bases (E1, E2) at each row of omega."""
    m = omega.shape[0]
    # start from the coordinate axis least aligned with each omega
    pick = np.argmin(np.abs(omega), axis=1)
    e = np.zeros((m, 3))
    e[np.arange(m), pick] = 1.0
    E1 = e - (e * omega).sum(axis=1, keepdims=True) * omega
    E1 /= np.linalg.norm(E1, axis=1, keepdims=True)
    E2 = np.cross(omega, E1)
    return E1, E2


def sphere_frechet_mean_batch(Y, W, init, grad_tol=1e-11, max_iter=500):
    """Minimize sum_j W_ij d^2(y_j, .) on S^2, simultaneously for every row i.

    Y: (n, 3) unit vectors; W: (m, n) weights, possibly signed but each row
    must contain a strictly positive entry; init: (m, 3) warm starts.

    Each iteration takes a modified Riemannian Newton step in the 2-D tangent
    plane: the Hessian of the squared geodesic distance is analytic on the
    sphere and its 2x2 eigenvalues are clamped to stay positive, so the step
    is a bounded descent direction even where signed weights make the
    curvature indefinite.  Armijo backtracking keeps the objective monotone
    (up to fp noise), so the result is never worse than the warm start.

    The tolerance is relative: row i stops once
    ||sum_j w_ij log(y_j)|| < grad_tol * sum_j |w_ij|, which makes the
    returned minimizer invariant to rescaling the weights.

    Returns (points (m, 3), list[SphereSolveInfo]).  Raises SphereSolverError
    if any row fails to converge within max_iter iterations.
    """
    Y = np.asarray(Y, dtype=float)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    init = np.atleast_2d(np.asarray(init, dtype=float))
    m, n = W.shape
    if Y.shape != (n, 3):
        raise ValueError("Y must be (n, 3) matching the weight columns")
    if not np.all(np.isfinite(W)):
        raise ValueError("weights must be finite")
    if np.any(W.max(axis=1) <= 0):
        raise ValueError("each weight row needs at least one strictly positive entry")

    scale = np.abs(W).sum(axis=1)
    Wn = W / scale[:, None]
    absWn = np.abs(Wn)
    omega = init / np.linalg.norm(init, axis=1, keepdims=True)

    iters = np.zeros(m, dtype=int)
    stalled = np.zeros(m, dtype=bool)
    gn = np.full(m, np.inf)
    obj = np.zeros(m)

    for it in range(max_iter + 1):
        dots = np.clip(omega @ Y.T, -1.0, 1.0)
        theta = np.arccos(dots)
        obj = (Wn * theta * theta).sum(axis=1)
        E1, E2 = _tangent_frames(omega)
        sin_t = np.sqrt(np.maximum(1.0 - dots * dots, 0.0))
        coef = np.where(theta < 1e-9, 1.0, theta / np.maximum(sin_t, 1e-12))
        # d^2 is non-smooth at the antipode, and a negative weight can park
        # the minimizer exactly there.  Snapped-antipodal points are excluded
        # from the gradient and Hessian; instead they grant a "kink budget"
        # of pi*|w| that the remaining gradient may be absorbed into
        # (first-order optimality in the subgradient sense).
        kink = theta >= np.pi - 1e-8
        smooth = ~kink
        Wm = Wn * smooth
        # tangent components of log maps: a_ij = <log_{omega_i}(y_j), E1_i>
        A = coef * (E1 @ Y.T)
        B = coef * (E2 @ Y.T)
        g1 = (Wm * A).sum(axis=1)
        g2 = (Wm * B).sum(axis=1)
        budget = np.pi * (absWn * kink).sum(axis=1)
        gn = np.maximum(np.hypot(g1, g2) - budget, 0.0)
        active = (gn >= grad_tol) & ~stalled
        if it == max_iter or not active.any():
            break

        # Hessian of sum w theta^2 in the (E1, E2) frame:
        # per point, c*I + (1-c)/theta^2 * uu' with c = theta*cot(theta)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(theta < 1e-8, 1.0, theta * dots / np.maximum(sin_t, 1e-12))
            q = np.where(theta < 1e-8, 1.0 / 3.0, (1.0 - c) / np.maximum(theta, 1e-12) ** 2)
        c = np.maximum(c, -1e6)
        h11 = 2.0 * ((Wm * (c + q * A * A)).sum(axis=1))
        h12 = 2.0 * ((Wm * (q * A * B)).sum(axis=1))
        h22 = 2.0 * ((Wm * (c + q * B * B)).sum(axis=1))
        # modified Newton: clamp the 2x2 eigenvalues to stay safely positive,
        # giving a bounded descent direction even where the curvature is
        # indefinite (possible under signed weights)
        tr = 0.5 * (h11 + h22)
        disc = np.sqrt(np.maximum(0.25 * (h11 - h22) ** 2 + h12 * h12, 0.0))
        lam1 = tr + disc
        lam2 = tr - disc
        floor = np.maximum(1e-6 * np.maximum(np.abs(lam1), np.abs(lam2)), 1e-8)
        lam1c = np.maximum(lam1, floor)
        lam2c = np.maximum(lam2, floor)
        # eigenvector for lam1: (h12, lam1 - h11) unless h12 ~ 0
        v1a = np.where(np.abs(h12) > 1e-300, h12, 1.0 * (h11 >= h22))
        v1b = np.where(np.abs(h12) > 1e-300, lam1 - h11, 1.0 * (h11 < h22))
        vn = np.hypot(v1a, v1b)
        v1a, v1b = v1a / vn, v1b / vn
        # solve H_clamped s = 2 g in the eigenbasis
        r1 = 2.0 * g1
        r2 = 2.0 * g2
        p1 = (v1a * r1 + v1b * r2) / lam1c
        p2 = (-v1b * r1 + v1a * r2) / lam2c
        s1 = v1a * p1 - v1b * p2
        s2 = v1b * p1 + v1a * p2
        dd = -2.0 * (g1 * s1 + g2 * s2)  # guaranteed negative with clamped eigs

        idx = np.flatnonzero(active)
        tau = np.ones(idx.size)
        # keep trial steps below a half great-circle
        slen = np.hypot(s1[idx], s2[idx])
        tau = np.minimum(tau, (0.5 * np.pi) / np.maximum(slen, 1e-300))
        accepted = np.zeros(idx.size, dtype=bool)
        cand = omega[idx].copy()
        obj_a = obj[idx]
        dd_a = dd[idx]
        for _ in range(40):
            trial = np.flatnonzero(~accepted)
            if trial.size == 0:
                break
            rows = idx[trial]
            tang = (tau[trial, None] * s1[rows, None]) * E1[rows] \
                 + (tau[trial, None] * s2[rows, None]) * E2[rows]
            new_pts = _batch_exp(omega[rows], tang)
            new_obj = _batch_objective(new_pts, Y, Wn[rows])
            # the fp-noise allowance keeps Newton stepping once the predicted
            # decrease falls below the resolution of the objective itself
            ok = new_obj <= obj_a[trial] + 1e-4 * tau[trial] * dd_a[trial] \
                + 1e-13 * (1.0 + np.abs(obj_a[trial]))
            upd = trial[ok]
            cand[upd] = new_pts[ok]
            accepted[upd] = True
            tau[trial[~ok]] *= 0.5
        moved = idx[accepted]
        omega[moved] = cand[accepted]
        iters[moved] = it + 1

        failed = idx[~accepted]
        if failed.size:
            # kink snap: iterates creeping toward a data point's antipode
            # cannot reach it by smooth steps, so when the line search dies
            # near an antipode, jump exactly there if it does not hurt
            far = np.argmax(theta[failed], axis=1)
            creep = (np.pi - theta[failed, far]) < 5e-3
            snapped = np.zeros(failed.size, dtype=bool)
            if np.any(creep):
                rows = failed[creep]
                cand_pts = -Y[far[creep]]
                already = np.linalg.norm(cand_pts - omega[rows], axis=1) < 1e-15
                cand_obj = _batch_objective(cand_pts, Y, Wn[rows])
                take = (cand_obj <= obj[rows] + 1e-13 * (1.0 + np.abs(obj[rows]))) & ~already
                if np.any(take):
                    omega[rows[take]] = cand_pts[take]
                    iters[rows[take]] = it + 1
                    snapped[np.flatnonzero(creep)[take]] = True
            # anything else that cannot improve along a descent direction is
            # at its numerical floor; leave it where it is
            stalled[failed[~snapped]] = True

    if np.any(gn >= grad_tol):
        bad = int(np.argmax(gn))
        raise SphereSolverError(
            f"sphere mean did not converge for {int(np.sum(gn >= grad_tol))} of {m} "
            f"query points (worst first-order norm {gn[bad] * scale[bad]:.3g})"
        )
    infos = [
        SphereSolveInfo(
            iterations=int(iters[i]),
            grad_norm=float(gn[i] * scale[i]),
            objective=float(obj[i] * scale[i]),
            converged=True,
        )
        for i in range(m)
    ]
    return omega, infos


def sphere_frechet_mean(points, weights, init=None, grad_tol=1e-11, max_iter=500):
    """Weighted Frechet mean of unit vectors; returns (point, SphereSolveInfo).

    Default warm start is the normalized extrinsic weighted mean; when that
    cancels to zero, the normalized unweighted mean is used instead.
    """
    Y = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if init is None:
        init = extrinsic_mean_init(Y, w)
    pts, infos = sphere_frechet_mean_batch(Y, w[None, :], init[None, :],
                                           grad_tol=grad_tol, max_iter=max_iter)
    return pts[0], infos[0]


def extrinsic_mean_init(Y, w):
    """Normalized weighted Euclidean mean; falls back to the unweighted one."""
    Y = np.asarray(Y, dtype=float)
    w = np.asarray(w, dtype=float)
    v = w @ Y
    nrm = np.linalg.norm(v)
    if nrm < 1e-12:
        v = Y.mean(axis=0)
        nrm = np.linalg.norm(v)
        if nrm < 1e-12:
            raise ValueError("cannot build a sphere warm start: mean direction vanishes")
    return v / nrm


class Euclidean1D:
    """Scalar responses with the absolute-difference metric."""

    name = "euclidean"

    def distance(self, a, b) -> float:
        return abs(float(a) - float(b))

    def squared_distances(self, Y, y):
        return (np.asarray(Y, dtype=float) - np.asarray(y, dtype=float)) ** 2

    def check_point(self, y):
        if not np.isfinite(y):
            raise ValueError("euclidean response must be finite")

    def frechet_mean(self, responses, weights, init=None):
        y = np.asarray(responses, dtype=float)
        w = np.asarray(weights, dtype=float)
        sw = w.sum()
        if sw <= 0:
            raise ValueError("euclidean Frechet mean needs a positive weight sum")
        return float((w * y).sum() / sw)

    def __eq__(self, other):
        return isinstance(other, Euclidean1D)

    def __hash__(self):
        return hash("euclidean")


class Wasserstein1D:
    """Quantile functions on a shared probability grid, L2 metric.

    Responses are passed around as rows of quantile values; `grid` holds the
    shared levels.  Signed-weight averages are projected back onto the
    monotone cone with PAV.
    """

    name = "wasserstein"

    def __init__(self, grid):
        grid = np.array(grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be a 1-D array with at least 2 levels")
        if grid[0] != 0.0 or grid[-1] != 1.0 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must increase strictly from 0 to 1")
        grid.setflags(write=False)
        self.grid = grid

    def distance(self, a, b) -> float:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return float(np.sqrt(np.maximum(np.trapezoid((a - b) ** 2, self.grid), 0.0)))

    def squared_distances(self, Q, q):
        """d^2 from each row of Q to the single quantile vector q."""
        diff2 = (np.asarray(Q, dtype=float) - np.asarray(q, dtype=float)) ** 2
        return np.maximum(np.trapezoid(diff2, self.grid, axis=-1), 0.0)

    def check_point(self, values):
        v = np.asarray(values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError("quantile vector does not match the shared grid")
        if np.any(np.diff(v) < 0):
            raise ValueError("quantile vector is not nondecreasing")

    def frechet_mean(self, responses, weights, init=None):
        Q = np.asarray(responses, dtype=float)
        w = np.asarray(weights, dtype=float)
        sw = w.sum()
        if sw <= 0:
            raise ValueError("wasserstein Frechet mean needs a positive weight sum")
        avg = (w @ Q) / sw
        return pav(avg)

    def to_quantile_grid(self, values) -> QuantileGrid:
        return QuantileGrid(self.grid, values)

    def __eq__(self, other):
        return isinstance(other, Wasserstein1D) and np.array_equal(self.grid, other.grid)

    def __hash__(self):
        return hash(("wasserstein", self.grid.size))


class Sphere:
    """Unit sphere S^2 with the geodesic (arc-length) metric."""

    name = "sphere"

    def distance(self, a, b) -> float:
        return sphere_distance(a, b)

    def squared_distances(self, Y, y):
        dots = np.clip(np.asarray(Y, dtype=float) @ np.asarray(y, dtype=float), -1.0, 1.0)
        return np.arccos(dots) ** 2

    def check_point(self, y):
        _as_sphere_point(y)

    def frechet_mean(self, responses, weights, init=None):
        point, _ = sphere_frechet_mean(responses, weights, init=init)
        return point

    def __eq__(self, other):
        return isinstance(other, Sphere)

    def __hash__(self):
        return hash("sphere")


def weighted_frechet_mean(kind, responses, weights, init=None):
    """Weighted Frechet mean of `responses` under geometry `kind`.

    responses: stacked array, one row (or scalar) per observation.  Weights
    may be signed (local-linear weights are); the per-geometry solvers
    enforce their own positivity requirements.
    """
    w = np.asarray(weights, dtype=float)
    resp = np.asarray(responses, dtype=float)
    if resp.shape[0] == 0:
        raise ValueError("responses must be nonempty")
    if w.shape != (resp.shape[0],):
        raise ValueError("weights must be one scalar per response")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    return kind.frechet_mean(resp, w, init=init)
