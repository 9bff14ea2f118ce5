import warnings

import numpy as np
import pytest

from nnbr import baselines
from nnbr.errors import ConvergenceWarning, SingularMatrixError
from nnbr.evalkit import SyntheticProblem, l2_error
from nnbr.models import Role

PROBLEM = SyntheticProblem("gauss_shift", 1, 0.5, (2.0,))


def _data(n, seed=0):
    return (PROBLEM.sample(Role.NUMERATOR, n, seed).data,
            PROBLEM.sample(Role.DENOMINATOR, n, seed).data)


def test_constant_basis_gives_mean_ratio_one():
    nu, de = _data(300)
    m = baselines.fit_ulsif_kernel(nu, de, sigma=1e6, lam=0.0, centers=np.zeros((1, 1)))
    assert m.theta[0] == pytest.approx(1.0, rel=1e-6)


def test_large_lambda_shrinks_to_zero():
    nu, de = _data(200)
    m = baselines.fit_ulsif_kernel(nu, de, sigma=1.0, lam=1e8, n_basis=20)
    assert np.max(np.abs(m.theta)) < 1e-7


def test_closed_form_residual_and_optimality():
    nu, de = _data(400, 1)
    lam = 1e-2
    centers = baselines.choose_centers(nu, 50, seed=0)
    m = baselines.fit_ulsif_kernel(nu, de, sigma=0.8, lam=lam, centers=centers)
    H, h = baselines.ulsif_system(nu, de, centers, 0.8)
    res = (H + lam * np.eye(50)) @ m.theta - h
    assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(h)
    best = baselines.ulsif_objective(m.theta, H, h, lam)
    rng = np.random.default_rng(0)
    for _ in range(10):
        P = m.theta + 1e-3 * rng.standard_normal((10_000, 50))
        vals = 0.5 * np.einsum("ij,jk,ik->i", P, H + lam * np.eye(50), P) - P @ h
        assert np.all(vals >= best - 1e-12)


def test_singular_without_ridge():
    nu, de = _data(50)
    centers = np.zeros((3, 1))           # duplicated centers: H has rank one
    with pytest.raises(SingularMatrixError):
        baselines.fit_ulsif_kernel(nu, de, sigma=1.0, lam=0.0, centers=centers)


def test_centers_are_numerator_rows():
    nu, _ = _data(30)
    c = baselines.choose_centers(nu, 100, seed=3)
    assert c.shape == (30, 1)
    assert np.array_equal(baselines.choose_centers(nu, 10, seed=3),
                          baselines.choose_centers(nu, 10, seed=3))


def test_ulsif_cv_accuracy_at_n2000():
    """n = 2000, 100 centers, median-based bandwidth grid, 5-fold CV."""
    nu, de = _data(2000, 4)
    sigma, lam, score = baselines.select_ulsif_cv(nu, de, n_basis=100, seed=0)
    assert np.isfinite(score)
    m = baselines.fit_ulsif_kernel(nu, de, sigma, lam, n_basis=100, seed=0)
    err, se = l2_error(m, PROBLEM, n_mc=100_000, seed=7)
    assert err <= 0.05
    assert err == pytest.approx(0.0081458, rel=1e-3)       # frozen regression value


def test_kliep_feasible_monotone():
    nu, de = _data(300, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        m = baselines.fit_kliep_kernel(nu, de, n_basis=50)
    assert np.all(m.theta >= 0)
    assert np.mean(m.forward_batch(de)) == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.diff(m.objective_history) >= 0)


def test_kliep_warns_when_capped():
    nu, de = _data(200, 3)
    with pytest.warns(ConvergenceWarning):
        baselines.fit_kliep_kernel(nu, de, n_basis=30, max_iter=2, tol=0.0)
