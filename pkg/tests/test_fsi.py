import numpy as np
import pytest
from hypothesis import given, strategies as st

from fsireg.fsi import (
    FsiConfig,
    IndexParam,
    InfeasibleFit,
    default_bandwidth_grid,
    fit_fsi,
    fit_fsi_bandwidths,
    fsi_fitted,
    generate_starts,
    loocv_bandwidth,
    normalize_identifiable,
    polar_to_theta,
    predict,
    theta_to_polar,
    wn_criterion,
    wn_proxy_sphere,
)
from fsireg.geometry import Euclidean1D, Sphere, Wasserstein1D
from fsireg.regression import RegressionDataset
from fsireg.smoothing import GAUSSIAN, DegenerateWindow, scalar_local_weights


# ---------------------------------------------------------------------------
# polar coordinates and identifiability
# ---------------------------------------------------------------------------

def test_polar_examples_p2():
    np.testing.assert_allclose(polar_to_theta([0.0]), [1.0, 0.0])
    np.testing.assert_allclose(polar_to_theta([np.pi / 4]),
                               [np.sqrt(0.5), np.sqrt(0.5)])


def test_polar_out_of_range():
    with pytest.raises(ValueError):
        polar_to_theta([2.0])


@given(st.integers(0, 2**31 - 1))
def test_polar_round_trip_p5(seed):
    rng = np.random.default_rng(seed)
    eta = rng.uniform(-np.pi / 2 + 1e-6, np.pi / 2 - 1e-6, size=4)
    theta = polar_to_theta(eta)
    assert np.linalg.norm(theta) == pytest.approx(1.0, abs=1e-12)
    assert theta[0] >= 0
    np.testing.assert_allclose(theta_to_polar(theta), eta, atol=1e-10)


def test_normalize_identifiable_examples():
    np.testing.assert_allclose(normalize_identifiable([3, 4]).theta, [0.6, 0.8])
    np.testing.assert_allclose(normalize_identifiable([-0.6, 0.8]).theta, [0.6, -0.8])
    np.testing.assert_allclose(normalize_identifiable([0, -1, 0]).theta, [0, 1, 0])
    with pytest.raises(ValueError):
        normalize_identifiable([0.0, 0.0])


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6))
def test_normalize_identifiable_sign_blind(values):
    v = np.asarray(values)
    if np.linalg.norm(v) < 1e-6:
        return
    a = normalize_identifiable(v)
    b = normalize_identifiable(-v)
    np.testing.assert_array_equal(a.theta, b.theta)
    # idempotent
    np.testing.assert_allclose(normalize_identifiable(a.theta).theta, a.theta, atol=1e-15)


def test_index_param_validation():
    with pytest.raises(ValueError):
        IndexParam(theta=np.array([0.5, 0.5]), eta=np.array([np.pi / 4]))  # not unit
    with pytest.raises(ValueError):
        IndexParam(theta=np.array([-1.0, 0.0]), eta=np.array([0.0]))  # sign rule
    p = IndexParam.from_vector([2.0, 0.0])
    np.testing.assert_allclose(p.theta, [1.0, 0.0])


# ---------------------------------------------------------------------------
# criterion
# ---------------------------------------------------------------------------

def _single_index_euclid(rng, n=60, noise=0.0, theta0=(0.8, 0.6)):
    theta0 = np.asarray(theta0)
    X = rng.uniform(-1, 1, size=(n, len(theta0)))
    U = X @ theta0
    Y = np.sin(1.5 * U) + 0.6 * U + noise * rng.normal(size=n)
    return RegressionDataset(X=X, Y=Y, kind=Euclidean1D()), theta0


def test_wn_zero_for_constant_responses(rng):
    X = rng.normal(size=(12, 2))
    data = RegressionDataset(X=X, Y=np.full(12, 3.3), kind=Euclidean1D())
    assert wn_criterion(data, np.array([1.0, 0.0]), 0.5) == pytest.approx(0.0, abs=1e-20)


def test_wn_separates_truth_from_far_theta(rng):
    data, theta0 = _single_index_euclid(rng, n=80)
    far = normalize_identifiable([-0.6, 0.8]).theta  # orthogonal direction
    h = 0.2
    assert wn_criterion(data, theta0, h) < wn_criterion(data, far, h)


def test_wn_hand_built_oracle():
    # literal re-implementation of the criterion with explicit loops
    X = np.array([[0.0, 0.1], [0.4, -0.2], [0.8, 0.3], [1.2, 0.0], [1.6, -0.4], [2.0, 0.2]])
    Y = np.array([0.1, 0.5, 0.2, 0.9, 1.5, 1.1])
    theta = normalize_identifiable([1.0, 0.5]).theta
    h = 0.6
    data = RegressionDataset(X=X, Y=Y, kind=Euclidean1D())
    got = wn_criterion(data, theta, h)

    u = X @ theta
    total = 0.0
    for i in range(6):
        lw = scalar_local_weights(u, u[i], h)
        fitted = np.mean(lw.weights * Y)
        total += (Y[i] - fitted) ** 2
    assert got == pytest.approx(total / 6, abs=1e-10)


def test_wn_depends_only_on_projections(rng):
    # X has a zero third column: reflecting theta across e3 keeps projections
    X = np.hstack([rng.normal(size=(20, 2)), np.zeros((20, 1))])
    Y = rng.normal(size=20)
    data = RegressionDataset(X=X, Y=Y, kind=Euclidean1D())
    t1 = np.array([0.48, 0.64, 0.6])
    t2 = np.array([0.48, 0.64, -0.6])
    assert wn_criterion(data, t1, 0.5) == pytest.approx(wn_criterion(data, t2, 0.5), abs=1e-12)


def test_wn_propagates_degenerate_window(rng):
    X = np.vstack([np.zeros((5, 2)), np.ones((5, 2)) * 100])
    Y = rng.normal(size=10)
    data = RegressionDataset(X=X, Y=Y, kind=Euclidean1D())
    with pytest.raises(DegenerateWindow):
        wn_criterion(data, np.array([1.0, 0.0]), 1e-3)


# ---------------------------------------------------------------------------
# sphere proxy
# ---------------------------------------------------------------------------

def _sphere_single_index(rng, n=30, noise=0.1):
    theta0 = normalize_identifiable([1.0, 1.0]).theta
    X = rng.uniform(-1, 1, size=(n, 2)) / np.sqrt(2)
    U = X @ theta0
    s = U / np.sqrt(2)
    r = np.sqrt(1 - s**2)
    M = np.stack([r * np.cos(np.pi * s), r * np.sin(np.pi * s), s], axis=1)
    Y = M + noise * rng.normal(size=(n, 3))
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    return RegressionDataset(X=X, Y=Y, kind=Sphere()), theta0


def test_proxy_zero_for_constant_responses(rng):
    X = rng.normal(size=(10, 2))
    Y = np.tile(np.array([0.0, 0.0, 1.0]), (10, 1))
    data = RegressionDataset(X=X, Y=Y, kind=Sphere())
    assert wn_proxy_sphere(data, np.array([1.0, 0.0]), 0.5) == pytest.approx(0.0, abs=1e-20)


def test_proxy_literal_formula(rng):
    data, theta0 = _sphere_single_index(rng, n=10)
    h = 0.4
    got = wn_proxy_sphere(data, theta0, h)
    u = data.X @ theta0
    total = 0.0
    for i in range(10):
        lw = scalar_local_weights(u, u[i], h)
        e = lw.weights @ data.Y
        e /= np.linalg.norm(e)
        total += np.arccos(np.clip(data.Y[i] @ e, -1, 1)) ** 2
    assert got == pytest.approx(total / 10, abs=1e-10)


def test_proxy_requires_sphere(rng):
    data, _ = _single_index_euclid(rng, n=12)
    with pytest.raises(ValueError):
        wn_proxy_sphere(data, np.array([1.0, 0.0]), 0.5)


# ---------------------------------------------------------------------------
# fit_fsi
# ---------------------------------------------------------------------------

def test_fit_fsi_recovers_noiseless_index(rng):
    data, theta0 = _single_index_euclid(rng, n=100)
    cfg = FsiConfig(bandwidths=[0.15, 0.3], seed=5)
    fit = fit_fsi(data, cfg)
    # oracle: dense grid over the angle at the chosen bandwidth
    etas = np.linspace(-np.pi / 2, np.pi / 2, 2001)
    vals = []
    for e in etas:
        try:
            vals.append(wn_criterion(data, polar_to_theta([e]), fit.h_star))
        except DegenerateWindow:
            vals.append(np.inf)
    eta_star = etas[int(np.argmin(vals))]
    assert abs(fit.theta_hat.eta[0] - eta_star) < 0.01
    se = np.arccos(np.clip(abs(fit.theta_hat.theta @ theta0), -1, 1)) ** 2
    assert se < 1e-4


def test_fit_fsi_sign_flip_equivalence(rng):
    data, theta0 = _single_index_euclid(rng, n=60)
    flipped = RegressionDataset(X=-data.X, Y=data.Y, kind=data.kind)
    cfg = FsiConfig(bandwidths=[0.25], seed=2)
    f1 = fit_fsi(data, cfg)
    f2 = fit_fsi(flipped, cfg)
    np.testing.assert_allclose(np.abs(f1.theta_hat.theta), np.abs(f2.theta_hat.theta),
                               atol=1e-6)


def test_fit_fsi_deterministic(rng):
    data, _ = _single_index_euclid(rng, n=50, noise=0.1)
    cfg = FsiConfig(bandwidths=[0.2, 0.4], seed=11)
    f1 = fit_fsi(data, cfg)
    f2 = fit_fsi(data, cfg)
    assert np.array_equal(f1.theta_hat.theta, f2.theta_hat.theta)
    assert f1.h_star == f2.h_star
    assert f1.criterion == f2.criterion


def test_fit_fsi_criterion_consistency(rng):
    data, _ = _single_index_euclid(rng, n=50, noise=0.2)
    cfg = FsiConfig(bandwidths=[0.25, 0.5], seed=3)
    fit = fit_fsi(data, cfg)
    recomputed = wn_criterion(data, fit.theta_hat, fit.h_star)
    assert fit.criterion == pytest.approx(recomputed, abs=1e-9)


def test_fit_fsi_refuses_p1(rng):
    X = rng.normal(size=(30, 1))
    data = RegressionDataset(X=X, Y=X[:, 0], kind=Euclidean1D())
    with pytest.raises(ValueError, match="p >= 2"):
        fit_fsi(data, FsiConfig(bandwidths=[0.3]))


def test_fit_fsi_needs_ten_observations(rng):
    X = rng.normal(size=(6, 2))
    data = RegressionDataset(X=X, Y=rng.normal(size=6), kind=Euclidean1D())
    with pytest.raises(ValueError, match="10"):
        fit_fsi(data, FsiConfig(bandwidths=[0.5]))


def test_fit_fsi_argmin_beats_one_degree_grid(rng):
    # at the selected bandwidth no 1-degree-spaced angle may do better
    data, _ = _single_index_euclid(rng, n=80)
    fit = fit_fsi(data, FsiConfig(bandwidths=[0.2], seed=6))
    best = fit.criterion
    for eta in np.deg2rad(np.arange(-89.0, 90.0)):
        try:
            val = wn_criterion(data, polar_to_theta([eta]), fit.h_star)
        except DegenerateWindow:
            continue
        assert best <= val + 1e-12


def test_start_count_overrides(rng):
    cfg = FsiConfig(n_starts=4, n_keep=1, seed=0)
    starts = generate_starts(4, cfg)
    assert starts.shape == (4, 3)
    data, theta0 = _single_index_euclid(rng, n=40, noise=0.1)
    bfs = fit_fsi_bandwidths(data, FsiConfig(bandwidths=[0.3], n_starts=4, n_keep=1, seed=0))
    assert sum(r.selected for r in bfs[0].trace) == 1
    assert len(bfs[0].trace) == 4


def test_loocv_refit_theta_variant(rng):
    data, theta0 = _single_index_euclid(rng, n=20, noise=0.2)
    cfg = FsiConfig(bandwidths=[0.3, 0.5], seed=1, n_starts=3, n_keep=1,
                    loocv_refit_theta=True)
    fit = fit_fsi(data, cfg)
    assert fit.h_star in (0.3, 0.5)
    # still deterministic
    fit2 = fit_fsi(data, cfg)
    assert fit.h_star == fit2.h_star
    assert np.array_equal(fit.theta_hat.theta, fit2.theta_hat.theta)


def test_fit_fsi_sphere_small(rng):
    data, theta0 = _sphere_single_index(rng, n=50, noise=0.2)
    cfg = FsiConfig(bandwidths=[0.2, 0.4], seed=4)
    fit = fit_fsi(data, cfg)
    se = np.arccos(np.clip(abs(fit.theta_hat.theta @ theta0), -1, 1)) ** 2
    assert se < 0.05
    assert np.allclose(np.linalg.norm(fit.fitted, axis=1), 1.0, atol=1e-10)


def test_generate_starts_modes():
    cfg = FsiConfig(seed=9)
    s1 = generate_starts(3, cfg)
    s2 = generate_starts(3, cfg)
    np.testing.assert_array_equal(s1, s2)
    assert s1.shape == (30, 2)  # 10p for p=3
    lat = generate_starts(3, FsiConfig(start_mode="lattice"))
    assert lat.shape == (9, 2)
    assert set(np.unique(lat)) == {-np.pi / 4, 0.0, np.pi / 4}


def test_default_bandwidth_grid_properties(rng):
    X = rng.normal(size=(40, 3))
    grid = default_bandwidth_grid(X, 10)
    assert grid.shape == (10,)
    assert np.all(np.diff(grid) > 0)
    u = X @ np.linalg.eigh(np.cov(X, rowvar=False, bias=True))[1][:, -1]
    d = np.abs(u[:, None] - u[None, :])[np.triu_indices(40, 1)]
    lo, hi = np.percentile(d[d > 0], [5, 50])
    assert grid[0] == pytest.approx(lo, rel=1e-9)
    assert grid[-1] == pytest.approx(hi, rel=1e-9)


# ---------------------------------------------------------------------------
# LOOCV bandwidth selection
# ---------------------------------------------------------------------------

def test_loocv_single_element_grid(rng):
    data, theta0 = _single_index_euclid(rng, n=30, noise=0.3)
    sel = loocv_bandwidth(data, "local_frechet", [0.4], theta=theta0)
    assert sel.h_star == 0.4


def test_loocv_matches_brute_force(rng):
    data, theta0 = _single_index_euclid(rng, n=25, noise=0.3)
    grid = [0.15, 0.3, 0.6, 1.2]
    sel = loocv_bandwidth(data, "local_frechet", grid, theta=theta0)
    u = data.X @ theta0
    for h in grid:
        total = 0.0
        for i in range(25):
            others = np.delete(np.arange(25), i)
            lw = scalar_local_weights(u[others], u[i], h)
            fitted = np.mean(lw.weights * data.Y[others])
            total += (data.Y[i] - fitted) ** 2
        assert sel.scores[h] == pytest.approx(total, abs=1e-9)
    brute_best = min(sorted(sel.scores), key=lambda h: (sel.scores[h], -h))
    assert sel.h_star == brute_best


def test_loocv_skips_infeasible_bandwidths(rng):
    X = np.vstack([np.zeros((6, 2)), np.ones((6, 2))]) + 0.01 * rng.normal(size=(12, 2))
    Y = rng.normal(size=12)
    data = RegressionDataset(X=X, Y=Y, kind=Euclidean1D())
    grid = [1e-4, 2.0]  # the tiny one is degenerate for every query point
    sel = loocv_bandwidth(data, "local_frechet", grid, theta=np.array([1.0, 0.0]))
    assert sel.h_star == 2.0
    assert 1e-4 not in sel.scores
    with pytest.raises(InfeasibleFit):
        loocv_bandwidth(data, "local_frechet", [1e-4], theta=np.array([1.0, 0.0]))


def test_loocv_ties_break_to_larger_h(rng):
    data, theta0 = _single_index_euclid(rng, n=20, noise=0.2)
    sel = loocv_bandwidth(data, "local_frechet", [0.5, 0.5], theta=theta0)
    assert sel.h_star == 0.5
    # duplicated scores: the larger h wins by construction of the scan
    scores = dict(sel.scores)
    assert len(scores) == 1


def test_loocv_mlf_runs(rng):
    data, _ = _single_index_euclid(rng, n=25, noise=0.3)
    sel = loocv_bandwidth(data, "mlf", [0.4, 0.8])
    assert sel.h_star in (0.4, 0.8)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def test_predict_training_point_matches_fitted(rng):
    data, _ = _single_index_euclid(rng, n=40, noise=0.1)
    cfg = FsiConfig(bandwidths=[0.3], seed=1)
    fit = fit_fsi(data, cfg)
    out = predict(fit, data, data.X[7])
    assert out.point == pytest.approx(fit.fitted[7], abs=1e-9)


def test_predict_constant_responses(rng):
    X = rng.uniform(-1, 1, size=(30, 2))
    data = RegressionDataset(X=X, Y=np.full(30, 1.25), kind=Euclidean1D())
    fit = fit_fsi(data, FsiConfig(bandwidths=[0.4], seed=0))
    out = predict(fit, data, np.array([0.05, -0.05]))
    assert out.point == pytest.approx(1.25, abs=1e-12)


def test_predict_matches_closed_form_local_linear(rng):
    data, _ = _single_index_euclid(rng, n=50, noise=0.1)
    fit = fit_fsi(data, FsiConfig(bandwidths=[0.35], seed=2))
    x_new = np.array([0.2, 0.1])
    out = predict(fit, data, x_new)
    u = data.X @ fit.theta_hat.theta
    u0 = x_new @ fit.theta_hat.theta
    kh = GAUSSIAN((u - u0) / fit.h_star) / fit.h_star
    Z = np.column_stack([np.ones(50), u - u0])
    beta = np.linalg.solve(Z.T @ (kh[:, None] * Z), Z.T @ (kh * data.Y))
    assert out.point == pytest.approx(beta[0], abs=1e-10)


def test_predict_warns_on_extrapolation(rng):
    data, _ = _single_index_euclid(rng, n=30, noise=0.1)
    fit = fit_fsi(data, FsiConfig(bandwidths=[0.3], seed=2))
    u = data.X @ fit.theta_hat.theta
    x_out = fit.theta_hat.theta * (u.max() + 3.0 * fit.h_star)
    with pytest.warns(UserWarning, match="outside"):
        predict(fit, data, x_out)


def test_fit_and_predict_with_epanechnikov_kernel(rng):
    data, theta0 = _single_index_euclid(rng, n=80, noise=0.05)
    cfg = FsiConfig(bandwidths=[0.6], seed=4, kernel="epanechnikov")
    fit = fit_fsi(data, cfg)
    assert fit.kernel == "epanechnikov"
    se = np.arccos(np.clip(abs(fit.theta_hat.theta @ theta0), -1, 1)) ** 2
    assert se < 0.05
    # predict defaults to the fit's own kernel: training points reproduce
    out = predict(fit, data, data.X[3])
    assert out.point == pytest.approx(fit.fitted[3], abs=1e-9)


def test_fsi_fitted_wasserstein_monotone(rng):
    grid = np.linspace(0, 1, 21)
    n = 20
    X = rng.uniform(-1, 1, size=(n, 2))
    U = X @ np.array([0.8, 0.6])
    Q = np.sort(rng.normal(size=(n, 21)) * 0.2 + U[:, None], axis=1)
    data = RegressionDataset(X=X, Y=Q, kind=Wasserstein1D(grid))
    fitted = fsi_fitted(data, np.array([0.8, 0.6]), 0.4, GAUSSIAN)
    assert np.all(np.diff(fitted, axis=1) >= 0)
