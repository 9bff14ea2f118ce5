"""Kernel baselines: closed-form uLSIF and KLIEP on a Gaussian
linear-in-parameter model with centers drawn from the numerator sample."""
import warnings

import numpy as np
from scipy import linalg

from . import kernels
from .errors import ConvergenceWarning, ShapeError, SingularMatrixError
from .models import KernelLinearModel, as_matrix, median_bandwidth

def choose_centers(nu, n_basis=100, seed=0):
    X_nu = as_matrix(nu)
    b = min(int(n_basis), X_nu.shape[0])
    if b < 1:
        raise ShapeError("need at least one basis function")
    idx = np.random.default_rng(seed).choice(X_nu.shape[0], size=b, replace=False)
    return X_nu[np.sort(idx)].copy()


def ulsif_system(nu, de, centers, sigma):
    """``H = mean_de phi phi^T`` and ``h = mean_nu phi``."""
    phi_de = kernels.gaussian_gram(as_matrix(de), centers, sigma)
    phi_nu = kernels.gaussian_gram(as_matrix(nu), centers, sigma)
    H = phi_de.T @ phi_de / phi_de.shape[0]
    h = phi_nu.mean(axis=0)
    return H, h


def _solve_ridge(H, h, lam):
    A = H + lam * np.eye(H.shape[0])
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularMatrixError(f"H + lambda I is not positive definite: {exc}") from exc
    theta = linalg.cho_solve(factor, h)
    # one step of iterative refinement
    theta += linalg.cho_solve(factor, h - A @ theta)
    return theta


def ulsif_objective(theta, H, h, lam=0.0):
    return 0.5 * theta @ H @ theta - h @ theta + 0.5 * lam * theta @ theta


def fit_ulsif_kernel(nu, de, sigma=None, lam=1e-3, n_basis=100, seed=0, centers=None):
    """``theta = (H + lam I)^{-1} h``; predictions clip negatives to zero.

    Raises :class:`SingularMatrixError` when the Cholesky factorization
    fails, which needs ``lam = 0`` and a rank-deficient ``H``.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if centers is None:
        centers = choose_centers(nu, n_basis, seed)
    if sigma is None:
        sigma = median_bandwidth(nu, de, seed=seed)
    H, h = ulsif_system(nu, de, centers, sigma)
    theta = _solve_ridge(H, h, lam)
    return KernelLinearModel(centers, sigma, theta, clip_negative=True)


def _folds(n, k, rng):
    return np.array_split(rng.permutation(n), k)


def select_ulsif_cv(nu, de, sigmas=None, lams=None, n_basis=100, n_folds=5, seed=0):
    """Grid search of ``(sigma, lam)`` by k-fold CV on the held-out uLSIF
    objective ``0.5 E_de[r^2] - E_nu[r]``. Returns ``(sigma, lam, score)``."""
    X_nu, X_de = as_matrix(nu), as_matrix(de)
    if sigmas is None:
        med = median_bandwidth(X_nu, X_de, seed=seed)
        sigmas = med * np.array([0.25, 0.5, 1.0, 2.0])
    if lams is None:
        lams = 10.0 ** np.arange(-4, 1)
    centers = choose_centers(X_nu, n_basis, seed)
    rng = np.random.default_rng([seed, 1])
    f_nu, f_de = _folds(X_nu.shape[0], n_folds, rng), _folds(X_de.shape[0], n_folds, rng)
    best = (None, None, np.inf)
    for sigma in sigmas:
        phi_nu = kernels.gaussian_gram(X_nu, centers, sigma)
        phi_de = kernels.gaussian_gram(X_de, centers, sigma)
        for lam in lams:
            score = 0.0
            for k in range(n_folds):
                tr_nu = np.setdiff1d(np.arange(X_nu.shape[0]), f_nu[k])
                tr_de = np.setdiff1d(np.arange(X_de.shape[0]), f_de[k])
                H = phi_de[tr_de].T @ phi_de[tr_de] / tr_de.size
                h = phi_nu[tr_nu].mean(axis=0)
                try:
                    theta = _solve_ridge(H, h, lam)
                except SingularMatrixError:
                    score = np.inf
                    break
                Hv = phi_de[f_de[k]].T @ phi_de[f_de[k]] / f_de[k].size
                hv = phi_nu[f_nu[k]].mean(axis=0)
                score += ulsif_objective(theta, Hv, hv) / n_folds
            if score < best[2]:
                best = (float(sigma), float(lam), float(score))
    return best


def fit_ulsif_cv(nu, de, n_basis=100, n_folds=5, seed=0, sigmas=None, lams=None):
    sigma, lam, _ = select_ulsif_cv(nu, de, sigmas, lams, n_basis, n_folds, seed)
    return fit_ulsif_kernel(nu, de, sigma, lam, n_basis, seed)


def fit_kliep_kernel(nu, de, sigma=None, n_basis=100, max_iter=2000, step=1.0, tol=1e-8,
                     seed=0, centers=None):
    """Maximize ``E_nu[log r]`` subject to ``E_de[r] = 1`` and ``theta >= 0``.

    Projected gradient ascent: step, clip at zero, rescale onto the
    normalization constraint. A step that lowers the objective is rejected
    and the step size halved, so the accepted sequence is monotone. The
    returned model carries ``objective_history`` (accepted iterates).
    """
    if centers is None:
        centers = choose_centers(nu, n_basis, seed)
    if sigma is None:
        sigma = median_bandwidth(nu, de, seed=seed)
    A = kernels.gaussian_gram(as_matrix(nu), centers, sigma)
    bvec = kernels.gaussian_gram(as_matrix(de), centers, sigma).mean(axis=0)

    def objective(theta):
        with np.errstate(divide="ignore"):
            return float(np.mean(np.log(A @ theta)))

    theta = np.ones(A.shape[1]) / bvec.sum()
    obj = objective(theta)
    history = [obj]
    converged = False
    for _ in range(max_iter):
        grad = A.T @ (1.0 / (A @ theta)) / A.shape[0]
        while step > 1e-16:
            cand = np.maximum(theta + step * grad, 0.0)
            scale = bvec @ cand
            if scale > 0:
                cand = cand / scale
                cand_obj = objective(cand)
                if cand_obj >= obj:
                    break
            step *= 0.5
        else:
            converged = True
            break
        gain = cand_obj - obj
        theta, obj = cand, cand_obj
        history.append(obj)
        step *= 1.5
        if gain < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"KLIEP stopped after max_iter={max_iter} iterations", ConvergenceWarning,
                      stacklevel=2)
    model = KernelLinearModel(centers, sigma, theta, clip_negative=True)
    model.objective_history = np.asarray(history)
    return model
