"""Downstream uses of an estimated ratio: inlier-based outlier scoring and
covariate-shift adaptation with importance-weighted kernel ridge regression."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import baselines, evalkit, kernels
from .errors import ConfigError, ShapeError, SingularMatrixError
from .losses import Family, LossSpec
from .models import MlpRatioModel, as_matrix, median_bandwidth
from .risk import IDENTITY, RELU


def outlier_scores(model, spec: LossSpec, test):
    """Higher score means more inlier-like. PULog models estimate ``C r*``,
    so their output is divided by ``C``."""
    scores = model.forward_batch(as_matrix(getattr(test, "data", test)))
    if spec is not None and spec.family is Family.PULOG:
        scores = scores / spec.C
    return scores


# kernel ridge -------------------------------------------------------------

KERNELS = ("linear", "gaussian", "polynomial")


@dataclass(frozen=True)
class RidgeSpec:
    kernel: str = "gaussian"
    lam: float = 1e-2
    sigma: float = 1.0
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown ridge kernel {self.kernel!r}")
        if not self.lam > 0:
            raise ConfigError("ridge lam must be > 0")
        if not self.sigma > 0:
            raise ConfigError("sigma must be > 0")
        if int(self.degree) != self.degree or self.degree < 1:
            raise ConfigError("degree must be an integer >= 1")

    def gram(self, A, B):
        A, B = as_matrix(A), as_matrix(B)
        if self.kernel == "linear":
            return A @ B.T
        if self.kernel == "polynomial":
            return (A @ B.T + self.offset) ** int(self.degree)
        return kernels.gaussian_gram(A, B, self.sigma)


@dataclass
class ImportanceWeights:
    weights: np.ndarray
    source: str = "uniform"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("importance weights must be finite and >= 0")
        if not np.any(w > 0):
            raise ValueError("importance weights are all zero")
        self.weights = w

    @classmethod
    def uniform(cls, n):
        return cls(np.ones(n), "uniform")

    def normalized(self):
        """Rescaled to mean one (keeps the ridge penalty on a common scale)."""
        return ImportanceWeights(self.weights / self.weights.mean(), self.source)


@dataclass
class RidgePredictor:
    X: np.ndarray
    alpha: np.ndarray
    spec: RidgeSpec

    def predict(self, X):
        return self.spec.gram(X, self.X) @ self.alpha

    __call__ = predict


def fit_weighted_ridge(train_X, train_y, weights, spec: RidgeSpec) -> RidgePredictor:
    """Minimize ``sum_i w_i (y_i - g(x_i))^2 + lam |g|^2`` over the RKHS.

    With ``S = diag(sqrt(w))`` the stationarity condition ``(W K + lam I) a = W y``
    is solved through the symmetric system ``(S K S + lam I) b = S y``,
    ``a = S b``. A jitter of ``1e-10 trace`` is added only if the first
    Cholesky attempt fails.
    """
    X = as_matrix(train_X)
    y = np.asarray(train_y, dtype=np.float64).ravel()
    if not isinstance(weights, ImportanceWeights):
        weights = ImportanceWeights(weights, "estimated")
    w = weights.weights
    if y.size != X.shape[0] or w.size != X.shape[0]:
        raise ShapeError("train_X, train_y and weights disagree in length")
    s = np.sqrt(w)
    A = s[:, None] * spec.gram(X, X) * s[None, :]
    A[np.diag_indices_from(A)] += spec.lam
    rhs = s * y
    try:
        factor = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError:
        A[np.diag_indices_from(A)] += 1e-10 * np.trace(A)
        try:
            factor = linalg.cho_factor(A, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularMatrixError(f"weighted ridge system is singular: {exc}") from exc
    beta = linalg.cho_solve(factor, rhs)
    return RidgePredictor(X, s * beta, spec)


def ridge_grid(kernel, X, lams=(1e-3, 1e-2, 1e-1, 1.0), degree=2):
    """Candidate specs for CV: ``lam`` grid, and for the Gaussian kernel the
    median bandwidth times {0.5, 1, 2}."""
    if kernel == "gaussian":
        med = median_bandwidth(X)
        return [RidgeSpec("gaussian", lam, sigma=med * f) for f in (0.5, 1.0, 2.0) for lam in lams]
    return [RidgeSpec(kernel, lam, degree=degree) for lam in lams]


def select_ridge_iwcv(X, y, weights, specs, n_folds=5, seed=0):
    """Importance-weighted k-fold CV: the held-out squared error of each fold
    is averaged with the importance weights. Returns ``(best_spec, scores)``."""
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    w = weights.weights if isinstance(weights, ImportanceWeights) else np.asarray(weights, float)
    folds = np.array_split(np.random.default_rng([seed, 3]).permutation(X.shape[0]), n_folds)
    scores = []
    for spec in specs:
        total = 0.0
        for k in range(n_folds):
            val = folds[k]
            tr = np.concatenate([folds[j] for j in range(n_folds) if j != k])
            if not np.any(w[tr] > 0) or w[val].sum() == 0:
                continue
            g = fit_weighted_ridge(X[tr], y[tr], ImportanceWeights(w[tr]), spec)
            err = (g.predict(X[val]) - y[val]) ** 2
            total += float(np.sum(w[val] * err) / w[val].sum()) / n_folds
        scores.append(total)
    return specs[int(np.argmin(scores))], scores


# covariate shift ------------------------------------------------------------

@dataclass(frozen=True)
class CovShiftProblem:
    """Regression under covariate shift with a known density ratio.

    ``mixture``: test x ~ N(0, I), train x ~ (1 - pi) N(0, I) + pi N(shift e_1, I);
    the ratio p_test/p_train is bounded by 1/(1 - pi).
    ``mean_shift``: train x ~ N(0, I), test x ~ N(shift e_1, I); unbounded ratio.

    Targets: ``quad`` y = x_1 - x_1^2/2 + sum_{j>1} x_j + noise,
    ``sin`` y = sin(2 x_1) + noise.
    """

    kind: str = "mixture"
    dim: int = 2
    pi: float = 0.5
    shift: float = 2.0
    target: str = "quad"
    noise: float = 0.1
    n_train: int = 500
    n_test: int = 500

    def __post_init__(self):
        if self.kind not in ("mixture", "mean_shift"):
            raise ConfigError(f"unknown covariate-shift kind {self.kind!r}")
        if self.target not in ("quad", "sin"):
            raise ConfigError(f"unknown target {self.target!r}")
        if self.dim < 1 or self.n_train < 2 or self.n_test < 2:
            raise ConfigError("need dim >= 1 and at least two train and test points")
        if self.kind == "mixture" and not 0.0 < self.pi < 1.0:
            raise ConfigError("pi must lie in (0, 1)")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")

    @property
    def ratio_problem(self):
        """The mixture case as a :class:`SyntheticProblem` (nu = test, de = train)."""
        return evalkit.SyntheticProblem("gauss_shift", self.dim, self.pi, (self.shift,))

    def true_ratio(self, X):
        X = as_matrix(X)
        if self.kind == "mixture":
            return self.ratio_problem.true_ratio(X)
        return np.exp(self.shift * X[:, 0] - 0.5 * self.shift ** 2)

    def sup_ratio(self):
        return self.ratio_problem.sup_ratio() if self.kind == "mixture" else math.inf

    def regression(self, X):
        X = as_matrix(X)
        if self.target == "sin":
            return np.sin(2.0 * X[:, 0])
        return X[:, 0] - 0.5 * X[:, 0] ** 2 + X[:, 1:].sum(axis=1)

    def sample(self, seed):
        """Returns ``(X_train, y_train, X_test, y_test)``."""
        rng = np.random.default_rng([seed, 20])
        d = self.dim
        X_tr = rng.standard_normal((self.n_train, d))
        X_te = rng.standard_normal((self.n_test, d))
        if self.kind == "mixture":
            X_tr[rng.random(self.n_train) < self.pi, 0] += self.shift
        else:
            X_te[:, 0] += self.shift
        y_tr = self.regression(X_tr) + self.noise * rng.standard_normal(self.n_train)
        y_te = self.regression(X_te) + self.noise * rng.standard_normal(self.n_test)
        return X_tr, y_tr, X_te, y_te


NN_METHODS = {
    "nnbr_lsif": ("LSIF", RELU),
    "nnbr_ukl": ("UKL", RELU),
    "nnbr_bkl": ("BKL", RELU),
    "nnbr_pu": ("PULog", RELU),
    "ulsif_nn": ("LSIF", IDENTITY),
    "pu_nn": ("PULog", IDENTITY),
}
METHODS = ("uniform", "true_ratio", "kernel_ulsif", "kernel_kliep") + tuple(NN_METHODS)


@dataclass
class MethodOptions:
    """Settings for the neural ratio estimators of the covariate-shift runs.
    ``C = None`` means ``1 / sup r*`` when that is finite, else 1/2."""

    C: float = None
    hidden: tuple = (32, 32)
    link: str = "softplus"
    epochs: int = 200
    batch_size: int = 50
    learning_rate: float = 1e-3
    lam: float = 0.0
    n_basis: int = 100
    extra: dict = field(default_factory=dict)


def estimate_weights(method, problem: CovShiftProblem, X_tr, X_te, seed, opts: MethodOptions):
    """Importance weights for the training points (numerator = test domain,
    denominator = train domain)."""
    from .trainer import TrainConfig, train

    if method == "uniform":
        return ImportanceWeights.uniform(X_tr.shape[0])
    if method == "true_ratio":
        return ImportanceWeights(problem.true_ratio(X_tr), "true_ratio")
    if method == "kernel_ulsif":
        model = baselines.fit_ulsif_cv(X_te, X_tr, n_basis=opts.n_basis, seed=seed)
        return ImportanceWeights(model.forward_batch(X_tr), method)
    if method == "kernel_kliep":
        import warnings

        from .errors import ConvergenceWarning
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model = baselines.fit_kliep_kernel(X_te, X_tr, n_basis=opts.n_basis, seed=seed)
        return ImportanceWeights(model.forward_batch(X_tr), method)
    if method not in NN_METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    family, corr = NN_METHODS[method]
    sup = problem.sup_ratio()
    C = opts.C if opts.C is not None else (1.0 / sup if math.isfinite(sup) else 0.5)
    spec = LossSpec(family, C)
    link = "sigmoid_clamped" if family == "PULog" else opts.link
    widths = [X_tr.shape[1], *opts.hidden, 1]
    model = MlpRatioModel.init(widths, link, seed=seed)
    config = TrainConfig(learning_rate=opts.learning_rate, lam=opts.lam,
                         batch_size_nu=min(opts.batch_size, X_te.shape[0]),
                         batch_size_de=min(opts.batch_size, X_tr.shape[0]),
                         epochs=opts.epochs, seed=seed, correction=corr)
    model, _ = train(model, spec, X_te, X_tr, config)
    w = outlier_scores(model, spec, X_tr)
    return ImportanceWeights(w, method)


@dataclass(frozen=True)
class CovShiftRow:
    method: str
    kernel: str
    pd: tuple
    mse: tuple
    seeds: tuple

    @property
    def mean_pd(self):
        return float(np.mean(self.pd))

    @property
    def sd_pd(self):
        return float(np.std(self.pd, ddof=1)) if len(self.pd) > 1 else 0.0

    @property
    def mean_mse(self):
        return float(np.mean(self.mse))

    @property
    def sd_mse(self):
        return float(np.std(self.mse, ddof=1)) if len(self.mse) > 1 else 0.0


RESULT_HEADER = ("method", "kernel", "mean_pd", "sd_pd", "mean_mse", "sd_mse", "seeds")


def run_covshift_seed(problem, method, kernel, seed, opts=None, degree=2, n_folds=5):
    """One seed: estimate weights, pick the ridge by IW-CV, refit, score on
    the test domain. Returns ``(pd, mse)``; PD uses test labels thresholded
    at their median."""
    opts = opts or MethodOptions()
    X_tr, y_tr, X_te, y_te = problem.sample(seed)
    w = estimate_weights(method, problem, X_tr, X_te, seed, opts).normalized()
    spec, _ = select_ridge_iwcv(X_tr, y_tr, w, ridge_grid(kernel, X_tr, degree=degree),
                                n_folds=n_folds, seed=seed)
    g = fit_weighted_ridge(X_tr, y_tr, w, spec)
    pred = g.predict(X_te)
    labels = np.where(y_te > np.median(y_te), 1, -1)
    return evalkit.pd(pred, labels), float(np.mean((pred - y_te) ** 2))


def covshift_experiment(problem: CovShiftProblem, method, ridge_kernel="linear", seeds=range(10),
                        opts=None, degree=2) -> CovShiftRow:
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ConfigError("need at least one seed")
    if ridge_kernel not in KERNELS:
        raise ConfigError(f"unknown ridge kernel {ridge_kernel!r}")
    res = [run_covshift_seed(problem, method, ridge_kernel, s, opts, degree) for s in seeds]
    return CovShiftRow(method, ridge_kernel, tuple(r[0] for r in res), tuple(r[1] for r in res),
                       seeds)
