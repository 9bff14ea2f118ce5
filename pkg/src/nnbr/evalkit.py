"""Synthetic problems with analytic density ratios, evaluation metrics and
brute-force oracles."""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .errors import ConfigError, LabelError, ShapeError
from .models import Role, SampleSet, as_matrix

_ROLE_STREAM = {Role.NUMERATOR: 0, Role.DENOMINATOR: 1}
_LABELED_STREAM = 2


@dataclass(frozen=True)
class SyntheticProblem:
    """Two Gaussian-based densities with a closed-form, bounded ratio.

    ``gauss_shift``: p_nu = N(0, I), p_de = (1 - pi) N(0, I) + pi N(m, I),
    so r* = 1 / ((1 - pi) + pi exp(m.x - |m|^2 / 2)) and sup r* = 1/(1 - pi).
    A scalar ``shift`` means ``shift * e_1``.

    ``gauss_scale``: p_nu = N(0, scale_nu^2 I), p_de = N(0, scale_de^2 I);
    only ``scale_nu <= scale_de`` keeps the ratio bounded.
    """

    kind: str = "gauss_shift"
    dim: int = 1
    pi: float = 0.5
    shift: tuple = (2.0,)
    scale_nu: float = 1.0
    scale_de: float = 1.0
    seed: int = 0
    m: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dimension must be >= 1")
        shift = np.atleast_1d(np.asarray(self.shift, dtype=np.float64))
        if shift.size == 1:
            m = np.zeros(self.dim)
            m[0] = shift[0]
        elif shift.size == self.dim:
            m = shift.copy()
        else:
            raise ConfigError(f"shift has {shift.size} entries for dim={self.dim}")
        object.__setattr__(self, "shift", tuple(float(v) for v in shift))
        object.__setattr__(self, "m", m)
        if self.kind == "gauss_shift":
            if not 0.0 < self.pi < 1.0:
                raise ConfigError("mixture weight pi must lie in (0, 1)")
        elif self.kind == "gauss_scale":
            if not (self.scale_nu > 0 and self.scale_de > 0):
                raise ConfigError("scales must be positive")
            if self.scale_nu > self.scale_de:
                raise ConfigError(
                    "gauss_scale with scale_nu > scale_de has an unbounded density ratio"
                )
        else:
            raise ConfigError(f"unknown problem kind {self.kind!r}")

    # densities ---------------------------------------------------------
    def _std_normal(self, X, scale=1.0, mean=None):
        X = as_matrix(X)
        if X.shape[1] != self.dim:
            raise ShapeError(f"problem has d={self.dim}, got d={X.shape[1]}")
        Y = X if mean is None else X - mean
        q = np.sum(Y * Y, axis=1) / (scale * scale)
        return np.exp(-0.5 * q) / ((2.0 * np.pi) ** (self.dim / 2) * scale ** self.dim)

    def pdf_nu(self, X):
        if self.kind == "gauss_shift":
            return self._std_normal(X)
        return self._std_normal(X, self.scale_nu)

    def pdf_de(self, X):
        if self.kind == "gauss_shift":
            return (1 - self.pi) * self._std_normal(X) + self.pi * self._std_normal(X, mean=self.m)
        return self._std_normal(X, self.scale_de)

    def true_ratio(self, X):
        X = as_matrix(X)
        if X.shape[1] != self.dim:
            raise ShapeError(f"problem has d={self.dim}, got d={X.shape[1]}")
        if self.kind == "gauss_shift":
            expo = X @ self.m - 0.5 * float(self.m @ self.m)
            with np.errstate(over="ignore"):
                return 1.0 / ((1.0 - self.pi) + self.pi * np.exp(expo))
        a, b = self.scale_nu, self.scale_de
        q = np.sum(X * X, axis=1)
        return (b / a) ** self.dim * np.exp(-0.5 * q * (1.0 / a**2 - 1.0 / b**2))

    def sup_ratio(self) -> float:
        if self.kind == "gauss_shift":
            if not np.any(self.m):
                return 1.0
            return 1.0 / (1.0 - self.pi)
        return (self.scale_de / self.scale_nu) ** self.dim

    # sampling ----------------------------------------------------------
    def sample(self, role, n, seed=None) -> SampleSet:
        role = Role(role)
        if n < 1:
            raise ConfigError("n must be >= 1")
        seed = self.seed if seed is None else seed
        rng = np.random.default_rng([seed, _ROLE_STREAM[role]])
        if self.kind == "gauss_scale":
            s = self.scale_nu if role is Role.NUMERATOR else self.scale_de
            return SampleSet(s * rng.standard_normal((n, self.dim)), role)
        X = rng.standard_normal((n, self.dim))
        if role is Role.DENOMINATOR:
            shifted = rng.random(n) < self.pi
            X[shifted] += self.m
        return SampleSet(X, role)

    def sample_labeled(self, n, seed=None):
        """Held-out draws with inlier labels (+1) and outlier labels (-1).

        For ``gauss_shift`` these are draws from p_de labelled by mixture
        component (+1 for the p_nu component); for ``gauss_scale`` half the
        rows come from p_nu (+1) and half from p_de (-1).
        """
        seed = self.seed if seed is None else seed
        rng = np.random.default_rng([seed, _LABELED_STREAM])
        if self.kind == "gauss_scale":
            n_pos = n // 2
            X = rng.standard_normal((n, self.dim))
            X[:n_pos] *= self.scale_nu
            X[n_pos:] *= self.scale_de
            y = np.where(np.arange(n) < n_pos, 1, -1)
            return X, y
        X = rng.standard_normal((n, self.dim))
        shifted = rng.random(n) < self.pi
        X[shifted] += self.m
        return X, np.where(shifted, -1, 1)

    # quadrature --------------------------------------------------------
    def bounding_box(self, width=10.0):
        if self.kind == "gauss_shift":
            lo = np.minimum(0.0, self.m) - width
            hi = np.maximum(0.0, self.m) + width
        else:
            lo = np.full(self.dim, -width * self.scale_de)
            hi = -lo
        return lo, hi

    def quadrature_grid(self, n_nodes=None):
        """Tensor Gauss-Legendre nodes and weights over the bounding box
        (2048 nodes for d=1, 256 per axis for d=2)."""
        if self.dim > 2:
            raise ShapeError("tensor quadrature is only provided for d <= 2")
        if n_nodes is None:
            n_nodes = 2048 if self.dim == 1 else 256
        t, w = _leggauss(int(n_nodes))
        lo, hi = self.bounding_box()
        axes = []
        for k in range(self.dim):
            half = 0.5 * (hi[k] - lo[k])
            axes.append((lo[k] + half * (t + 1.0), half * w))
        if self.dim == 1:
            return axes[0][0][:, None], axes[0][1]
        gx, gy = np.meshgrid(axes[0][0], axes[1][0], indexing="ij")
        wx, wy = np.meshgrid(axes[0][1], axes[1][1], indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()]), (wx * wy).ravel()


@lru_cache(maxsize=8)
def _leggauss(n):
    # the node computation is an O(n^3) eigenproblem; cache it
    t, w = np.polynomial.legendre.leggauss(n)
    t.flags.writeable = False
    w.flags.writeable = False
    return t, w


def true_ratio(problem, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1 and problem.dim == x.size:
        return float(problem.true_ratio(x[None, :])[0])
    return problem.true_ratio(x)


def sup_ratio(problem):
    return problem.sup_ratio()


def sample(problem, role, n, seed):
    return problem.sample(role, n, seed)


# metrics ---------------------------------------------------------------

@dataclass
class ScoredLabels:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).ravel()
        self.labels = np.asarray(self.labels).ravel()
        if self.scores.shape != self.labels.shape:
            raise ShapeError("scores and labels differ in length")

    def split(self):
        pos = _positive_mask(self.labels)
        s_pos, s_neg = self.scores[pos], self.scores[~pos]
        if s_pos.size == 0 or s_neg.size == 0:
            raise LabelError("AUROC needs at least one positive and one negative")
        return s_pos, s_neg


def _positive_mask(labels):
    labels = np.asarray(labels)
    if labels.dtype == bool:
        return labels
    return labels == 1


def _scored(scores, labels):
    if isinstance(scores, ScoredLabels):
        return scores
    return ScoredLabels(scores, labels)


def auroc(scores, labels=None) -> float:
    """Mann-Whitney AUROC via midranks; positives are labels equal to 1."""
    sl = _scored(scores, labels)
    s_pos, s_neg = sl.split()
    ranks = rankdata(np.concatenate([s_pos, s_neg]), method="average")
    n_pos, n_neg = s_pos.size, s_neg.size
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc_bruteforce(scores, labels=None) -> float:
    """O(n_pos * n_neg) pair count, the oracle for :func:`auroc`."""
    s_pos, s_neg = _scored(scores, labels).split()
    return float(kernels.pairwise_auc(s_pos, s_neg))


def pd(scores, labels=None) -> float:
    """Pairwise disagreement, ``1 - AUROC``."""
    return 1.0 - auroc(scores, labels)


def normalization_diag(model, de_holdout) -> float:
    """Mean of the estimated ratio over held-out denominator samples; close
    to 1 for a good estimate."""
    return float(np.mean(model.forward_batch(as_matrix(de_holdout))))


def l2_error(model, problem, n_mc=100_000, seed=0):
    """Monte-Carlo ``E_de[(r_hat - r*)^2]`` and its standard error."""
    X = problem.sample(Role.DENOMINATOR, n_mc, seed=seed).data
    sq = (model.forward_batch(X) - problem.true_ratio(X)) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else 0.0


def l2_error_on(model, problem, X):
    """Same estimate on a fixed held-out denominator sample."""
    X = as_matrix(X)
    sq = (model.forward_batch(X) - problem.true_ratio(X)) ** 2
    return float(sq.mean())
