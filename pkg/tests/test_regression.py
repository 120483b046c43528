import numpy as np
import pytest

from fsireg.geometry import Euclidean1D, Sphere, Wasserstein1D, pav
from fsireg.regression import (
    RegressionDataset,
    global_frechet_fit,
    global_frechet_weights,
    local_frechet_at,
    multivariate_local_frechet_at,
    nadaraya_watson_sphere_init,
    standardize,
)
from fsireg.smoothing import GAUSSIAN, scalar_local_weights
from conftest import random_unit_vectors


def _euclid_data(rng, n=40, p=2):
    X = rng.normal(size=(n, p))
    Y = np.sin(X @ np.ones(p)) + 0.2 * rng.normal(size=n)
    return RegressionDataset(X=X, Y=Y, kind=Euclidean1D())


def _ll_fit_1d(u, y, u0, h):
    """Closed-form local-linear fitted value (independent 2-parameter WLS)."""
    kh = GAUSSIAN((u - u0) / h) / h
    Z = np.column_stack([np.ones_like(u), u - u0])
    beta = np.linalg.solve(Z.T @ (kh[:, None] * Z), Z.T @ (kh * y))
    return beta[0]


def test_local_frechet_matches_local_linear(rng):
    data = _euclid_data(rng)
    theta = np.array([0.6, 0.8])
    x = np.array([0.3, -0.1])
    fit = local_frechet_at(data, x, theta, 0.5)
    oracle = _ll_fit_1d(data.X @ theta, data.Y, x @ theta, 0.5)
    assert fit.point == pytest.approx(oracle, abs=1e-10)


def test_local_frechet_constant_responses(rng):
    X = rng.normal(size=(15, 2))
    for kind, Y in [
        (Euclidean1D(), np.full(15, 2.5)),
        (Sphere(), np.tile(np.array([0.0, 0.0, 1.0]), (15, 1))),
    ]:
        data = RegressionDataset(X=X, Y=Y, kind=kind)
        fit = local_frechet_at(data, X[0], np.array([1.0, 0.0]), 0.8)
        np.testing.assert_allclose(fit.point, Y[0], atol=1e-9)


def test_local_frechet_wasserstein_large_h_oracle(rng):
    # h large enough that every window sees all points: the fit must equal
    # an explicit weight computation + pointwise average + monotone projection
    grid = np.linspace(0, 1, 9)
    Q = np.sort(rng.normal(size=(5, 9)), axis=1)
    X = rng.normal(size=(5, 2))
    data = RegressionDataset(X=X, Y=Q, kind=Wasserstein1D(grid))
    theta = np.array([1.0, 0.0])
    x = X[2]
    h = 50.0
    fit = local_frechet_at(data, x, theta, h)
    w = scalar_local_weights(X[:, 0], x[0], h).weights
    oracle = pav((w @ Q) / w.sum())
    np.testing.assert_allclose(fit.point, oracle, atol=1e-10)


def test_local_frechet_permutation_invariant(rng):
    data = _euclid_data(rng, n=25)
    perm = rng.permutation(25)
    data2 = RegressionDataset(X=data.X[perm], Y=data.Y[perm], kind=data.kind)
    theta = np.array([1.0, 0.0])
    x = np.zeros(2)
    f1 = local_frechet_at(data, x, theta, 0.7)
    f2 = local_frechet_at(data2, x, theta, 0.7)
    assert f1.point == pytest.approx(f2.point, abs=1e-12)


# ---------------------------------------------------------------------------
# global Frechet
# ---------------------------------------------------------------------------

def test_global_weights_mean_one_and_centered_query(rng):
    X = rng.normal(size=(30, 3))
    w = global_frechet_weights(X, rng.normal(size=3))
    assert w.mean() == pytest.approx(1.0, abs=1e-12)
    w_center = global_frechet_weights(X, X.mean(axis=0))
    np.testing.assert_allclose(w_center, np.ones(30), atol=1e-12)


def test_global_fit_equals_ols(rng):
    n, p = 50, 3
    X = rng.normal(size=(n, p))
    Y = X @ np.array([1.0, -2.0, 0.5]) + 0.3 * rng.normal(size=n) + 4.0
    data = RegressionDataset(X=X, Y=Y, kind=Euclidean1D())
    x = rng.normal(size=p)
    fit = global_frechet_fit(data, x)
    Z = np.hstack([np.ones((n, 1)), X])
    beta = np.linalg.lstsq(Z, Y, rcond=None)[0]
    assert fit.point == pytest.approx(beta[0] + x @ beta[1:], abs=1e-8)


def test_global_fit_singular_covariance():
    X = np.tile(np.array([1.0, 2.0]), (12, 1))  # identical rows
    data = RegressionDataset(X=X, Y=np.arange(12.0), kind=Euclidean1D())
    with pytest.raises(ValueError):
        global_frechet_fit(data, np.zeros(2))


def test_global_fit_sphere_objective_not_above_warm_start(rng):
    Y = random_unit_vectors(rng, 30)
    Y[:, 2] = np.abs(Y[:, 2]) + 0.3
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    X = rng.normal(size=(30, 2))
    data = RegressionDataset(X=X, Y=Y, kind=Sphere())
    x = rng.normal(size=2) * 1.5  # signed weights likely
    fit = global_frechet_fit(data, x)
    w = global_frechet_weights(X, x)
    init = (w @ Y) / np.linalg.norm(w @ Y)
    f = lambda om: float(np.mean(w * np.arccos(np.clip(Y @ om, -1, 1)) ** 2))
    assert f(fit.point) <= f(init) + 1e-9
    assert abs(np.linalg.norm(fit.point) - 1) < 1e-10


# ---------------------------------------------------------------------------
# multivariate local Frechet
# ---------------------------------------------------------------------------

def test_mlf_reduces_to_local_frechet_p1(rng):
    X = rng.normal(size=(20, 1))
    Y = np.cos(X[:, 0]) + 0.1 * rng.normal(size=20)
    data = RegressionDataset(X=X, Y=Y, kind=Euclidean1D())
    x = np.array([0.2])
    f1 = multivariate_local_frechet_at(data, x, 0.6)
    f2 = local_frechet_at(data, x, np.array([1.0]), 0.6)
    assert f1.point == pytest.approx(f2.point, abs=1e-10)


def test_mlf_constant_responses(rng):
    X = rng.normal(size=(20, 2))
    data = RegressionDataset(X=X, Y=np.full(20, -1.5), kind=Euclidean1D())
    fit = multivariate_local_frechet_at(data, np.zeros(2), 0.8)
    assert fit.point == pytest.approx(-1.5, abs=1e-10)


def test_mlf_matches_multivariate_local_linear(rng):
    n, p = 45, 2
    X = rng.normal(size=(n, p))
    Y = np.sin(X[:, 0]) * np.cos(X[:, 1]) + 0.1 * rng.normal(size=n)
    data = RegressionDataset(X=X, Y=Y, kind=Euclidean1D())
    x = np.array([0.1, -0.3])
    h = 0.7
    fit = multivariate_local_frechet_at(data, x, h)
    kappa = np.prod(GAUSSIAN((X - x) / h) / h, axis=1)
    Z = np.hstack([np.ones((n, 1)), X - x])
    beta = np.linalg.solve(Z.T @ (kappa[:, None] * Z), Z.T @ (kappa * Y))
    assert fit.point == pytest.approx(beta[0], abs=1e-8)


# ---------------------------------------------------------------------------
# sphere warm start
# ---------------------------------------------------------------------------

def _sphere_data(rng, n=10):
    Y = random_unit_vectors(rng, n)
    X = rng.normal(size=(n, 2))
    return RegressionDataset(X=X, Y=Y, kind=Sphere())


def test_nw_init_constant_responses(rng):
    y = np.array([0.0, 1.0, 0.0])
    data = RegressionDataset(X=rng.normal(size=(8, 2)),
                             Y=np.tile(y, (8, 1)), kind=Sphere())
    got = nadaraya_watson_sphere_init(data, 3, np.array([1.0, 0.0]), 0.5)
    np.testing.assert_allclose(got, y, atol=1e-12)


def test_nw_init_two_point_midpoint():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [-0.1, 0.0]])
    Y = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    data = RegressionDataset(X=X, Y=Y, kind=Sphere())
    # at observation 0 the two neighbours sit symmetrically: equal weights
    got = nadaraya_watson_sphere_init(data, 0, np.array([1.0, 0.0]), 0.4)
    np.testing.assert_allclose(got, np.array([1, 1, 0]) / np.sqrt(2), atol=1e-12)


def test_nw_init_direct_formula(rng):
    data = _sphere_data(rng)
    theta = np.array([0.8, 0.6])
    h = 0.5
    i = 4
    got = nadaraya_watson_sphere_init(data, i, theta, h)
    u = data.X @ theta
    kap = GAUSSIAN((u[i] - u) / h)
    kap[i] = 0.0
    oracle = kap @ data.Y
    oracle /= np.linalg.norm(oracle)
    np.testing.assert_allclose(got, oracle, atol=1e-12)
    assert np.linalg.norm(got) == pytest.approx(1.0, abs=1e-12)


def test_fitted_objects_keep_invariants(rng):
    data = _sphere_data(rng, n=15)
    data.Y[:, 0] = np.abs(data.Y[:, 0]) + 0.2
    data.Y /= np.linalg.norm(data.Y, axis=1, keepdims=True)
    fit = local_frechet_at(data, data.X[0], np.array([1.0, 0.0]), 1.0)
    assert abs(np.linalg.norm(fit.point) - 1.0) < 1e-10

    grid = np.linspace(0, 1, 11)
    Q = np.sort(rng.normal(size=(15, 11)), axis=1)
    dW = RegressionDataset(X=data.X, Y=Q, kind=Wasserstein1D(grid))
    fitW = local_frechet_at(dW, data.X[0], np.array([1.0, 0.0]), 0.3)
    assert np.all(np.diff(fitW.point) >= 0)


def test_standardize_roundtrip(rng):
    X = rng.normal(size=(25, 3)) * np.array([2.0, 0.5, 7.0]) + np.array([1.0, -3.0, 10.0])
    Xs, rec = standardize(X)
    np.testing.assert_allclose(Xs.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(Xs.std(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(rec.apply(X), Xs)
    with pytest.raises(ValueError):
        standardize(np.ones((10, 2)))
