import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from gdsp.baselines import (
    PairedData,
    gsp_lev,
    gsp_ls,
    gsp_lscm,
    gsp_rls,
    heat_kernel,
    lev_objective,
    ls_objective,
    lscm_grad,
    lscm_objective,
    predict,
)
from gdsp.graph import materialize_filter

from conftest import random_sd


def _pairs(seed, n=6, t=40, theta=None, noise=0.0):
    rng = np.random.default_rng(seed)
    sd = random_sd(seed, n)
    x = rng.normal(0, 1, (n, t))
    if theta is None:
        xs = rng.normal(0, 1, (n, t))
    else:
        xs = materialize_filter(sd, theta) @ x + noise * rng.standard_normal((n, t))
    return sd, PairedData(x, xs)


# --- GSP-LS ------------------------------------------------------------------

def test_ls_identity_target():
    sd, d = _pairs(0)
    d = PairedData(d.x, d.x)
    np.testing.assert_allclose(gsp_ls(sd, d).as_array(), [1.0, 0.0, 0.0], atol=1e-8)


def test_ls_recovers_first_order_term():
    sd, d = _pairs(1, theta=(0.0, 1.0, 0.0))
    np.testing.assert_allclose(gsp_ls(sd, d).as_array(), [0.0, 1.0, 0.0], atol=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_ls_matches_brute_force_minimum(seed):
    sd, d = _pairs(10 + seed)
    theta = gsp_ls(sd, d).as_array()
    # coarse grid, then a Nelder-Mead polish from the best grid point
    grid = np.linspace(-2, 2, 21)
    best = min(itertools.product(grid, grid, grid), key=lambda th: ls_objective(sd, d, th))
    res = minimize(lambda th: ls_objective(sd, d, th), best, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20_000})
    assert ls_objective(sd, d, theta) <= res.fun + 1e-6
    assert ls_objective(sd, d, theta) == pytest.approx(res.fun, abs=1e-6)


def test_ls_is_local_minimum_under_perturbation():
    for seed in range(100):
        sd, d = _pairs(seed, n=int(3 + seed % 6), t=20)
        theta = gsp_ls(sd, d).as_array()
        base = ls_objective(sd, d, theta)
        for k in range(3):
            for sign in (-1, 1):
                probe = theta.copy()
                probe[k] += sign * 1e-3
                assert ls_objective(sd, d, probe) >= base


def test_paired_data_validation():
    with pytest.raises(ValueError):
        PairedData(np.zeros((3, 4)), np.zeros((3, 5)))
    with pytest.raises(ValueError):
        PairedData(np.full((2, 2), np.nan), np.zeros((2, 2)))


# --- GSP-RLS -----------------------------------------------------------------

def test_rls_zero_penalty_equals_ls():
    sd, d = _pairs(5)
    np.testing.assert_allclose(gsp_rls(sd, d, lam=0.0).as_array(), gsp_ls(sd, d).as_array(), atol=1e-6)


def test_rls_large_penalty_is_zero():
    sd, d = _pairs(6)
    np.testing.assert_array_equal(gsp_rls(sd, d, lam=1e9).as_array(), [0.0, 0.0, 0.0])


def test_rls_minimises_penalised_objective():
    sd, d = _pairs(7, theta=(0.8, -0.2, 0.05), noise=0.3)
    lam = 5.0
    theta = gsp_rls(sd, d, lam=lam).as_array()

    def obj(th):
        return ls_objective(sd, d, th) + lam * np.sum(np.abs(th))

    ls = gsp_ls(sd, d).as_array()
    assert obj(theta) <= obj(ls) + 1e-9
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert obj(theta) <= obj(theta + 1e-3 * rng.standard_normal(3)) + 1e-9


def test_rls_rejects_negative_penalty():
    sd, d = _pairs(0)
    with pytest.raises(ValueError):
        gsp_rls(sd, d, lam=-1.0)


# --- GSP-LSCM ----------------------------------------------------------------

def test_lscm_zero_penalty_equals_ls():
    sd, d = _pairs(8)
    np.testing.assert_allclose(gsp_lscm(sd, d, lam=0.0).as_array(), gsp_ls(sd, d).as_array(), atol=1e-6)


def test_lscm_realizable_recovery():
    truth = (0.9, -0.08, 0.02)
    sd, d = _pairs(9, t=200, theta=truth)
    np.testing.assert_allclose(gsp_lscm(sd, d, lam=1.0).as_array(), truth, atol=1e-3)


def test_lscm_gradient_matches_central_differences():
    sd, d = _pairs(11, t=30)
    cx, cs = np.cov(d.x), np.cov(d.x_star)
    theta = np.array([0.4, 0.3, -0.2])
    g = lscm_grad(sd, d, theta, 0.7, cx, cs)
    h = 1e-6
    fd = np.array([
        (lscm_objective(sd, d, theta + h * e, 0.7, cx, cs)
         - lscm_objective(sd, d, theta - h * e, 0.7, cx, cs)) / (2 * h)
        for e in np.eye(3)
    ])
    np.testing.assert_allclose(g, fd, rtol=1e-5)


def test_lscm_needs_two_columns():
    sd, d = _pairs(0, t=1)
    with pytest.raises(ValueError, match="columns"):
        gsp_lscm(sd, d)


# --- GSP-LEV -----------------------------------------------------------------

def test_heat_kernel_zero_scale_is_identity():
    sd = random_sd(3, 7)
    np.testing.assert_allclose(heat_kernel(sd, 0.0), np.eye(7), atol=1e-12)


def test_heat_kernel_preserves_constants():
    # L 1 = 0, so every heat kernel fixes the constant signal
    sd = random_sd(3, 7)
    np.testing.assert_allclose(heat_kernel(sd, 1.7) @ np.ones(7), np.ones(7), atol=1e-12)


def test_lev_single_scale_has_unit_weight():
    sd, d = _pairs(12)
    res = gsp_lev(sd, d, taus=(1.0,))
    np.testing.assert_array_equal(res.weights, [1.0])
    np.testing.assert_allclose(res.filter_matrix, heat_kernel(sd, 1.0), atol=1e-15)


def test_lev_concentrates_on_planted_scale():
    rng = np.random.default_rng(13)
    sd = random_sd(13, 8)
    x = rng.normal(0, 1, (8, 200))
    d = PairedData(x, heat_kernel(sd, 0.5) @ x + 1e-3 * rng.standard_normal((8, 200)))
    res = gsp_lev(sd, d, taus=(0.5, 2.0))
    assert res.weights[0] >= 0.99
    assert res.weights.sum() == pytest.approx(1.0, abs=1e-12)
    # precisions live on a log scale clamped to [1e-8, 1e8]
    for v in (res.alpha, res.gamma):
        assert 1e-8 * (1 - 1e-12) <= v <= 1e8 * (1 + 1e-12)


def test_lev_gradient_matches_central_differences():
    sd, d = _pairs(14, t=20)
    kernels = np.stack([heat_kernel(sd, t) for t in (0.5, 1.0, 3.0)])
    xxt = d.x @ d.x.T
    p = np.array([0.2, -0.4, 0.1, 0.3, -0.5])
    _, g = lev_objective(p, kernels, d.x, d.x_star, xxt)
    h = 1e-6
    fd = np.array([
        (lev_objective(p + h * e, kernels, d.x, d.x_star, xxt)[0]
         - lev_objective(p - h * e, kernels, d.x, d.x_star, xxt)[0]) / (2 * h)
        for e in np.eye(5)
    ])
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)


def test_lev_is_deterministic():
    sd, d = _pairs(15)
    a, b = gsp_lev(sd, d), gsp_lev(sd, d)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(a.filter_matrix, b.filter_matrix)


def test_lev_rejects_bad_scales():
    sd, d = _pairs(0)
    with pytest.raises(ValueError):
        gsp_lev(sd, d, taus=())
    with pytest.raises(ValueError):
        gsp_lev(sd, d, taus=(-1.0,))


# --- predict -----------------------------------------------------------------

def test_predict_identity_and_shape_check():
    x = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(predict(np.eye(3), x), x)
    with pytest.raises(ValueError, match="incompatible"):
        predict(np.eye(2), x)
