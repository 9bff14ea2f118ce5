"""Mini-batch training of a ratio model on the corrected risk.

Per batch: if the clip term ``E_de[l1] - C E_nu[l1]`` is non-negative, take
an Adam step on the full risk; otherwise take an Adam step that increases
the clip term (the ``l2`` part is left out of that step). The penalty
gradient is added to the loss gradient before Adam sees it.
"""
import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import evalkit, kernels
from .dataio import fmt
from .errors import ConfigError, NumericalError, ShapeError
from .losses import LossSpec
from .models import MlpRatioModel, Role, SampleSet, as_matrix
from .risk import ASCENT, RELU, CorrectionFn, nnbr_param_gradient, risk_from_values


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lam: float = 0.0
    regularizer: str = "l2"
    batch_size_nu: int = 100
    batch_size_de: int = 100
    epochs: int = 100
    seed: int = 0
    shuffle: bool = True
    wrap: bool = True
    correction: CorrectionFn = field(default_factory=lambda: RELU)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0.0 < self.beta1 < self.beta2 < 1.0:
            raise ConfigError("need 0 < beta1 < beta2 < 1")
        if not self.adam_eps > 0:
            raise ConfigError("adam_eps must be > 0")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.regularizer not in ("l2", "l1"):
            raise ConfigError(f"unknown regularizer {self.regularizer!r}")
        if self.batch_size_nu < 1 or self.batch_size_de < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(state: AdamState, params, grad, config: TrainConfig):
    """Bias-corrected Adam update. Returns ``(new_state, new_params)``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise ShapeError("params, grad and optimizer state must share a shape")
    b1, b2 = config.beta1, config.beta2
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return AdamState(m, v, t), new


def _epoch_rng(config, epoch_index):
    return np.random.default_rng([config.seed, epoch_index])


def minibatch_indices(n_nu, n_de, config: TrainConfig, epoch_index):
    """Index pairs for one epoch.

    Both streams are permuted independently by an epoch-seeded generator.
    ``N = max(ceil(n_nu/bs_nu), ceil(n_de/bs_de))``; the stream(s) needing N
    batches are cut into consecutive chunks, a shorter stream is read
    cyclically so every batch has both roles.
    """
    bs_nu, bs_de = config.batch_size_nu, config.batch_size_de
    if not config.wrap and (bs_nu > n_nu or bs_de > n_de):
        raise ConfigError("batch size exceeds sample count and wrap-around is disabled")
    rng = _epoch_rng(config, epoch_index)
    if config.shuffle:
        perm_nu = rng.permutation(n_nu)
        perm_de = rng.permutation(n_de)
    else:
        perm_nu, perm_de = np.arange(n_nu), np.arange(n_de)
    k_nu, k_de = math.ceil(n_nu / bs_nu), math.ceil(n_de / bs_de)
    n_batches = max(k_nu, k_de) if config.wrap else min(k_nu, k_de)

    def take(perm, bs, k, j):
        if k == n_batches or not config.wrap:
            return perm[j * bs:(j + 1) * bs]
        return perm[(j * bs + np.arange(bs)) % perm.size]

    return [(take(perm_nu, bs_nu, k_nu, j), take(perm_de, bs_de, k_de, j))
            for j in range(n_batches)]


def make_minibatches(nu, de, config: TrainConfig, epoch_index):
    X_nu, X_de = as_matrix(nu), as_matrix(de)
    return [(X_nu[i], X_de[j])
            for i, j in minibatch_indices(X_nu.shape[0], X_de.shape[0], config, epoch_index)]


@dataclass
class Holdout:
    """Optional held-out data monitored once per epoch."""

    de: np.ndarray = None
    X_labeled: np.ndarray = None
    y_labeled: np.ndarray = None
    problem: object = None
    X_l2: np.ndarray = None


@dataclass
class TrainTrace:
    risk: np.ndarray
    clip_raw: np.ndarray
    ascent_frac: np.ndarray
    e_de_r: np.ndarray
    auroc: np.ndarray
    l2_error: np.ndarray

    @classmethod
    def empty(cls, epochs):
        return cls(*(np.full(epochs, np.nan) for _ in range(6)))

    def truncated(self, epochs):
        return TrainTrace(*(getattr(self, f.name)[:epochs].copy() for f in fields(self)))

    def __len__(self):
        return self.risk.size


TRACE_HEADER = ["epoch", "risk", "clip_raw", "ascent_frac", "e_de_r", "auroc"]


def write_trace_csv(trace: TrainTrace, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for e in range(len(trace)):
            w.writerow([e + 1, fmt(trace.risk[e]), fmt(trace.clip_raw[e]),
                        fmt(trace.ascent_frac[e]), fmt(trace.e_de_r[e]), fmt(trace.auroc[e])])


def _penalty_grad(params, config):
    if config.lam == 0.0:
        return 0.0
    if config.regularizer == "l2":
        return config.lam * params
    return config.lam * np.sign(params)


def _python_epoch(model, spec, X_nu, X_de, batches, state, config, epoch, fail):
    raws, n_ascent = [], 0
    for idx_nu, idx_de in batches:
        last = model.params.copy()
        try:
            grad, branch, bd = nnbr_param_gradient(spec, model, X_nu[idx_nu], X_de[idx_de],
                                                   config.correction)
        except ValueError as exc:
            fail(f"epoch {epoch + 1}: {exc}", epoch, last)
        if not (np.all(np.isfinite(grad)) and math.isfinite(bd.total)):
            fail(f"epoch {epoch + 1}: non-finite gradient or risk", epoch, last)
        grad = grad + _penalty_grad(model.params, config)
        new_state, new = adam_step(state, model.params, grad, config)
        if not np.all(np.isfinite(new)):
            fail(f"epoch {epoch + 1}: non-finite parameters", epoch, last)
        state.m, state.v, state.t = new_state.m, new_state.v, new_state.t
        model.params = new
        raws.append(bd.term_clip_raw)
        n_ascent += branch == ASCENT
    return float(np.mean(raws)), n_ascent / len(batches)


def _csr(index_lists):
    ptr = np.zeros(len(index_lists) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(ix) for ix in index_lists])
    return np.concatenate(index_lists).astype(np.int64), ptr


def _fused_epoch(model, spec, X_nu, X_de, batches, state, config, epoch, fail):
    nu_idx, nu_ptr = _csr([b[0] for b in batches])
    de_idx, de_ptr = _csr([b[1] for b in batches])
    dom = spec.domain
    theta = model.params
    t, sum_raw, n_ascent, done, status = kernels.train_epoch_mlp_numba(
        np.ascontiguousarray(X_nu), np.ascontiguousarray(X_de), nu_idx, nu_ptr, de_idx, de_ptr,
        theta, state.m, state.v, state.t, model._widths_arr, model._code, model.epsilon,
        kernels.FAMILY_CODES[spec.family.value], spec.C, dom.lower, dom.upper,
        dom.lower_closed, dom.upper_closed, kernels.CORRECTION_CODES[config.correction.kind],
        config.learning_rate, config.beta1, config.beta2, config.adam_eps, config.lam,
        0 if config.regularizer == "l2" else 1)
    state.t = t
    if status != kernels.STATUS_OK:
        what = "model output outside the loss domain" if status == kernels.STATUS_DOMAIN \
            else "non-finite gradient, risk or parameters"
        fail(f"epoch {epoch + 1}, batch {done + 1}: {what}", epoch, theta.copy())
    return sum_raw / done, n_ascent / done


def train(model, spec: LossSpec, nu, de, config: TrainConfig, holdout: Holdout = None,
          fused=None):
    """Train ``model`` in place for exactly ``config.epochs`` epochs.

    Returns ``(model, trace)``. On a non-finite parameter or risk the last
    finite parameters are restored and :class:`NumericalError` is raised
    with ``state=(model, partial_trace)``.

    ``fused`` selects the numba epoch kernel (MLP models, built-in
    corrections); ``None`` picks it whenever the numba backend is active.
    """
    if isinstance(nu, SampleSet) and nu.role is not Role.NUMERATOR:
        raise ConfigError("nu must be a numerator sample set")
    if isinstance(de, SampleSet) and de.role is not Role.DENOMINATOR:
        raise ConfigError("de must be a denominator sample set")
    X_nu, X_de = as_matrix(nu), as_matrix(de)
    if X_nu.shape[1] != X_de.shape[1]:
        raise ShapeError("numerator and denominator dimensions differ")
    if not (model.lower >= spec.domain.lower and model.upper <= spec.domain.upper):
        raise ConfigError(
            f"model range ({model.lower}, {model.upper}) does not fit the "
            f"{spec.family.value} domain"
        )
    holdout = holdout or Holdout()
    corr = config.correction
    state = AdamState.zeros(model.n_params)
    trace = TrainTrace.empty(config.epochs)
    can_fuse = type(model) is MlpRatioModel and corr.kind in kernels.CORRECTION_CODES
    if fused is None:
        fused = kernels.USE_NUMBA and can_fuse
    elif fused and not (kernels.HAVE_NUMBA and can_fuse):
        raise ConfigError("the fused epoch kernel needs numba, an MLP and a built-in correction")

    def fail(msg, epoch, last):
        model.params = last
        raise NumericalError(msg, state=(model, trace.truncated(epoch)))

    for epoch in range(config.epochs):
        batches = minibatch_indices(X_nu.shape[0], X_de.shape[0], config, epoch)
        if fused:
            mean_raw, ascent_frac = _fused_epoch(model, spec, X_nu, X_de, batches, state,
                                                 config, epoch, fail)
        else:
            mean_raw, ascent_frac = _python_epoch(model, spec, X_nu, X_de, batches, state,
                                                  config, epoch, fail)
        last = model.params.copy()
        try:
            full = risk_from_values(spec, model.forward_batch(X_nu), model.forward_batch(X_de), corr)
        except ValueError as exc:
            fail(f"epoch {epoch + 1}: {exc}", epoch, last)
        if not math.isfinite(full.total):
            fail(f"epoch {epoch + 1}: non-finite training risk", epoch, last)
        trace.risk[epoch] = full.total
        trace.clip_raw[epoch] = mean_raw
        trace.ascent_frac[epoch] = ascent_frac
        r_hold = None
        if holdout.de is not None:
            r_hold = model.forward_batch(holdout.de)
            trace.e_de_r[epoch] = float(np.mean(r_hold))
        if holdout.X_labeled is not None:
            trace.auroc[epoch] = evalkit.auroc(model.forward_batch(holdout.X_labeled),
                                               holdout.y_labeled)
        if holdout.problem is not None:
            if holdout.X_l2 is not None:
                trace.l2_error[epoch] = evalkit.l2_error_on(model, holdout.problem, holdout.X_l2)
            elif r_hold is not None:
                diff = r_hold - holdout.problem.true_ratio(holdout.de)
                trace.l2_error[epoch] = float(np.mean(diff * diff))
    return model, trace
