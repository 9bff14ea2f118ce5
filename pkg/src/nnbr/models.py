"""Density-ratio models: a ReLU MLP with a positive output link, a
linear-in-parameter Gaussian kernel model, a capped wrapper and a few
parameter-free helpers.

Every model exposes ``forward_batch(X)``, ``backward(X, upstream)`` (the
gradient of ``sum_i upstream_i * r(x_i)`` with respect to ``params``),
a flat ``params`` vector and ``to_dict()`` for JSON serialization.
"""
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .dataio import dumps_json
from .errors import ShapeError


class Role(str, Enum):
    NUMERATOR = "numerator"
    DENOMINATOR = "denominator"


@dataclass
class SampleSet:
    """An ``n x d`` batch of covariates drawn from one of the two densities."""

    data: np.ndarray
    role: Role

    def __post_init__(self):
        self.role = Role(self.role)
        self.data = as_matrix(self.data)
        if not np.all(np.isfinite(self.data)):
            raise ShapeError("sample set contains non-finite entries")

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    def __len__(self):
        return self.data.shape[0]


def as_matrix(X) -> np.ndarray:
    if isinstance(X, SampleSet):
        return X.data
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ShapeError(f"expected a 2-D sample matrix, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ShapeError(f"empty sample matrix of shape {X.shape}")
    return X


class RatioModel:
    """Common surface. Subclasses override ``forward_batch`` and friends."""

    lower = 0.0
    upper = np.inf
    input_dim = None

    @property
    def params(self) -> np.ndarray:
        return np.zeros(0)

    @params.setter
    def params(self, value):
        if np.size(value):
            raise ShapeError("model has no trainable parameters")

    @property
    def n_params(self):
        return self.params.size

    def _check_input(self, X):
        X = as_matrix(X)
        if self.input_dim is not None and X.shape[1] != self.input_dim:
            raise ShapeError(f"model expects d={self.input_dim}, got d={X.shape[1]}")
        return X

    def forward(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ShapeError("forward expects a single d-vector")
        return float(self.forward_batch(x[None, :])[0])

    def forward_batch(self, X) -> np.ndarray:
        raise NotImplementedError

    def forward_cached(self, X):
        """Outputs plus whatever ``backward`` can reuse."""
        return self.forward_batch(X), None

    def backward(self, X, upstream, cache=None) -> np.ndarray:
        X = self._check_input(X)
        _check_upstream(X, upstream)
        return np.zeros(0)

    def __call__(self, X):
        return self.forward_batch(X)

    def copy(self):
        return model_from_dict(self.to_dict())

    def to_dict(self) -> dict:
        raise NotImplementedError


def _check_upstream(X, upstream):
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (X.shape[0],):
        raise ShapeError(f"upstream has shape {upstream.shape}, expected ({X.shape[0]},)")
    return upstream


class MlpRatioModel(RatioModel):
    """Fully connected ReLU network ``[d, h_1, ..., h_L, 1]`` with an output
    link: ``softplus`` and ``exp`` give r > 0, ``sigmoid_clamped`` gives
    r in [epsilon, 1 - epsilon]."""

    def __init__(self, widths, link="softplus", params=None, epsilon=1e-6, seed=None):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or widths[-1] != 1 or min(widths) < 1:
            raise ShapeError(f"invalid layer widths {widths}")
        if link not in kernels.LINK_CODES:
            raise ValueError(f"unknown link {link!r}")
        self.widths = widths
        self.link = link
        self.epsilon = float(epsilon)
        self.seed = seed
        self._code = kernels.LINK_CODES[link]
        self._widths_arr = np.asarray(widths, dtype=np.int64)
        size = kernels.n_params(widths)
        if params is None:
            params = np.zeros(size)
        params = np.array(params, dtype=np.float64)
        if params.shape != (size,):
            raise ShapeError(f"expected {size} parameters, got {params.shape}")
        self._params = params
        self.input_dim = widths[0]
        if link == "sigmoid_clamped":
            self.lower, self.upper = self.epsilon, 1.0 - self.epsilon
        else:
            self.lower, self.upper = 0.0, np.inf

    @classmethod
    def init(cls, widths, link="softplus", seed=0, epsilon=1e-6, init_output=None):
        """He-uniform weights, zero biases, and a final bias chosen so that
        the link maps a zero logit to ``init_output`` (1.0, or 0.5 for the
        clamped sigmoid)."""
        model = cls(widths, link=link, epsilon=epsilon, seed=seed)
        rng = np.random.default_rng(seed)
        theta = model._params
        off = 0
        for fin, fout in zip(model.widths[:-1], model.widths[1:]):
            limit = np.sqrt(6.0 / fin)
            theta[off:off + fin * fout] = rng.uniform(-limit, limit, size=fin * fout)
            off += fin * fout
            theta[off:off + fout] = 0.0
            off += fout
        if init_output is None:
            init_output = 0.5 if link == "sigmoid_clamped" else 1.0
        theta[-1] = _inverse_link(link, init_output, epsilon)
        return model

    @property
    def params(self):
        return self._params

    @params.setter
    def params(self, value):
        value = np.array(value, dtype=np.float64)
        if value.shape != self._params.shape:
            raise ShapeError(f"expected {self._params.shape} parameters, got {value.shape}")
        self._params = value

    def layer(self, index):
        """``(W, b)`` views of one layer."""
        off = 0
        for l, (fin, fout) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            if l == index:
                W = self._params[off:off + fin * fout].reshape(fin, fout)
                return W, self._params[off + fin * fout:off + fin * fout + fout]
            off += fin * fout + fout
        raise IndexError(index)

    def forward_cached(self, X):
        X = self._check_input(X)
        r, z, hidden = kernels.mlp_forward(X, self._params, self._widths_arr,
                                           self._code, self.epsilon)
        return r, (X, z, hidden)

    def forward_batch(self, X):
        return self.forward_cached(X)[0]

    def backward(self, X, upstream, cache=None):
        X = self._check_input(X)
        upstream = _check_upstream(X, upstream)
        if cache is None:
            _, cache = self.forward_cached(X)
        _, z, hidden = cache
        return kernels.mlp_backward(X, self._params, self._widths_arr, hidden, z,
                                    upstream, self._code, self.epsilon)

    def to_dict(self):
        return {
            "model": "mlp",
            "widths": self.widths,
            "link": self.link,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "params": self._params.tolist(),
        }


def _inverse_link(link, y, eps):
    if link == "softplus":
        return float(np.log(np.expm1(y)))
    if link == "exp":
        return float(np.log(y))
    p = (y - eps) / (1.0 - 2.0 * eps)
    return float(np.log(p / (1.0 - p)))


def median_bandwidth(*samples, max_points=1000, seed=0):
    """Median pairwise Euclidean distance of the pooled samples."""
    pooled = np.vstack([as_matrix(s) for s in samples])
    if pooled.shape[0] > max_points:
        idx = np.random.default_rng(seed).choice(pooled.shape[0], max_points, replace=False)
        pooled = pooled[np.sort(idx)]
    diff = pooled[:, None, :] - pooled[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    iu = np.triu_indices(pooled.shape[0], k=1)
    med = float(np.median(dist[iu])) if iu[0].size else 1.0
    return med if med > 0 else 1.0


class KernelLinearModel(RatioModel):
    """``r(x) = sum_j theta_j exp(-|x - c_j|^2 / (2 sigma^2))``.

    With ``clip_negative`` the prediction is ``max(r, 0)`` (the uLSIF
    convention); the gradient is then zero where the clip is active.
    """

    def __init__(self, centers, sigma, theta=None, clip_negative=True):
        self.centers = as_matrix(centers).copy()
        if not sigma > 0:
            raise ValueError("bandwidth must be positive")
        self.sigma = float(sigma)
        if theta is None:
            theta = np.zeros(self.centers.shape[0])
        theta = np.array(theta, dtype=np.float64)
        if theta.shape != (self.centers.shape[0],):
            raise ShapeError("theta must have one entry per basis center")
        self.theta = theta
        self.clip_negative = bool(clip_negative)
        self.input_dim = self.centers.shape[1]

    @property
    def params(self):
        return self.theta

    @params.setter
    def params(self, value):
        value = np.array(value, dtype=np.float64)
        if value.shape != self.theta.shape:
            raise ShapeError("wrong number of kernel coefficients")
        self.theta = value

    def design(self, X):
        return kernels.gaussian_gram(self._check_input(X), self.centers, self.sigma)

    def forward_cached(self, X):
        phi = self.design(X)
        raw = phi @ self.theta
        out = np.maximum(raw, 0.0) if self.clip_negative else raw
        return out, (phi, raw)

    def forward_batch(self, X):
        return self.forward_cached(X)[0]

    def backward(self, X, upstream, cache=None):
        X = self._check_input(X)
        upstream = _check_upstream(X, upstream)
        if cache is None:
            _, cache = self.forward_cached(X)
        phi, raw = cache
        if self.clip_negative:
            upstream = np.where(raw > 0.0, upstream, 0.0)
        return phi.T @ upstream

    def to_dict(self):
        return {
            "model": "kernel",
            "centers": self.centers.tolist(),
            "sigma": self.sigma,
            "theta": self.theta.tolist(),
            "clip_negative": self.clip_negative,
        }


class CappedModel(RatioModel):
    """``min(inner(x), cap)``; shares its parameters with ``inner``."""

    def __init__(self, inner, cap):
        if not cap > 0:
            raise ValueError("cap must be positive")
        self.inner = inner
        self.cap = float(cap)
        self.input_dim = inner.input_dim
        self.lower = inner.lower
        self.upper = min(inner.upper, self.cap)

    @property
    def params(self):
        return self.inner.params

    @params.setter
    def params(self, value):
        self.inner.params = value

    def forward_cached(self, X):
        raw, cache = self.inner.forward_cached(X)
        return np.minimum(raw, self.cap), (raw, cache)

    def forward_batch(self, X):
        return self.forward_cached(X)[0]

    def backward(self, X, upstream, cache=None):
        X = self._check_input(X)
        upstream = _check_upstream(X, upstream)
        if cache is None:
            _, cache = self.forward_cached(X)
        raw, inner_cache = cache
        return self.inner.backward(X, np.where(raw < self.cap, upstream, 0.0), inner_cache)

    def to_dict(self):
        return {"model": "capped", "cap": self.cap, "inner": self.inner.to_dict()}


class ConstantModel(RatioModel):
    def __init__(self, value, input_dim=None):
        self.value = float(value)
        self.input_dim = input_dim

    def forward_batch(self, X):
        X = self._check_input(X)
        return np.full(X.shape[0], self.value)

    def to_dict(self):
        return {"model": "constant", "value": self.value, "input_dim": self.input_dim}


class FunctionModel(RatioModel):
    """Wraps a vectorized callable (e.g. an analytic ratio). Not serializable."""

    def __init__(self, fn, input_dim=None, lower=0.0, upper=np.inf):
        self.fn = fn
        self.input_dim = input_dim
        self.lower, self.upper = lower, upper

    def forward_batch(self, X):
        X = self._check_input(X)
        return np.asarray(self.fn(X), dtype=np.float64).reshape(X.shape[0])

    def to_dict(self):
        raise TypeError("FunctionModel cannot be serialized")


def model_from_dict(doc) -> RatioModel:
    kind = doc.get("model")
    if kind == "mlp":
        return MlpRatioModel(doc["widths"], link=doc["link"], params=doc["params"],
                             epsilon=doc.get("epsilon", 1e-6), seed=doc.get("seed"))
    if kind == "kernel":
        return KernelLinearModel(doc["centers"], doc["sigma"], doc["theta"],
                                 clip_negative=doc.get("clip_negative", True))
    if kind == "capped":
        return CappedModel(model_from_dict(doc["inner"]), doc["cap"])
    if kind == "constant":
        return ConstantModel(doc["value"], doc.get("input_dim"))
    raise ValueError(f"unknown model kind {kind!r}")


def dumps_model(model) -> str:
    return dumps_json(model.to_dict())


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> RatioModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def forward(model, x):
    return model.forward(x)


def forward_batch(model, X):
    return model.forward_batch(X)


def backward(model, X, upstream):
    return model.backward(X, upstream)
