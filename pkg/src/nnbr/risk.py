"""Empirical Bregman risk, its non-negative correction and population
integrals used as test oracles.

With ``l1``/``l2`` from :mod:`nnbr.losses` the corrected risk is

    E_nu[l2(r)] + g(E_de[l1(r)] - C E_nu[l1(r)])

where ``g`` is a consistent correction function (``max(0, .)`` by default).
Sample means use numpy's pairwise summation, so results are reproducible.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import losses
from .errors import QuadratureError, RoleError, UnsupportedFamily
from .losses import Family, LossSpec
from .models import Role, SampleSet, as_matrix

DESCENT = "descent"
ASCENT = "ascent"


@dataclass(frozen=True)
class CorrectionFn:
    """Correction applied to the aggregated clip term.

    A consistent correction is Lipschitz, non-negative and equal to the
    identity on [0, inf). ``kind="custom"`` takes any such ``fn``.
    """

    kind: str = "relu"
    fn: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.kind not in ("relu", "identity", "custom"):
            raise ValueError(f"unknown correction {self.kind!r}")
        if self.kind == "custom" and self.fn is None:
            raise ValueError("custom correction needs fn")

    def __call__(self, x: float) -> float:
        if self.kind == "relu":
            return max(0.0, x)
        if self.kind == "identity":
            return x
        return float(self.fn(x))

    def corrects(self, raw: float) -> bool:
        """True when the batch falls in the region the correction modifies,
        i.e. when the trainer should take the ascent step."""
        return self.kind != "identity" and raw < 0.0


RELU = CorrectionFn("relu")
IDENTITY = CorrectionFn("identity")


def correction_from_name(name) -> CorrectionFn:
    if isinstance(name, CorrectionFn):
        return name
    return CorrectionFn(str(name).strip().lower())


@dataclass(frozen=True)
class RiskBreakdown:
    term_nu_l2: float
    term_clip_raw: float
    term_clip_corrected: float
    total: float

    @property
    def branch(self):
        return ASCENT if self.term_clip_corrected != self.term_clip_raw else DESCENT


def _samples(nu, de):
    if isinstance(nu, SampleSet) and nu.role is not Role.NUMERATOR:
        raise RoleError("first sample set must be the numerator")
    if isinstance(de, SampleSet) and de.role is not Role.DENOMINATOR:
        raise RoleError("second sample set must be the denominator")
    return as_matrix(nu), as_matrix(de)


def risk_from_values(spec: LossSpec, r_nu, r_de, corr: CorrectionFn = RELU) -> RiskBreakdown:
    """Risk breakdown from model outputs on the two samples."""
    r_nu = np.asarray(r_nu, dtype=np.float64)
    r_de = np.asarray(r_de, dtype=np.float64)
    term_nu_l2 = float(np.mean(losses.l2(spec, r_nu)))
    raw = float(np.mean(losses.l1(spec, r_de)) - spec.C * np.mean(losses.l1(spec, r_nu)))
    corrected = corr(raw)
    return RiskBreakdown(term_nu_l2, raw, corrected, term_nu_l2 + corrected)


def empirical_br(spec: LossSpec, model, nu, de) -> float:
    """Uncorrected sample risk (up to the display-form constant shift)."""
    X_nu, X_de = _samples(nu, de)
    return risk_from_values(spec, model.forward_batch(X_nu), model.forward_batch(X_de),
                            IDENTITY).total


def empirical_nnbr(spec: LossSpec, model, nu, de, corr: CorrectionFn = RELU) -> RiskBreakdown:
    X_nu, X_de = _samples(nu, de)
    return risk_from_values(spec, model.forward_batch(X_nu), model.forward_batch(X_de), corr)


def gradient_signal_from_values(spec: LossSpec, r_nu, r_de, corr: CorrectionFn = RELU):
    """Per-sample derivatives of the objective w.r.t. the model outputs.

    Descent branch: derivative of the full corrected risk. Ascent branch
    (clip term negative): derivative of ``-(E_de[l1] - C E_nu[l1])`` only;
    the ``l2`` term is dropped.
    Returns ``(upstream_nu, upstream_de, branch, breakdown)``.
    """
    r_nu = np.asarray(r_nu, dtype=np.float64)
    r_de = np.asarray(r_de, dtype=np.float64)
    bd = risk_from_values(spec, r_nu, r_de, corr)
    n_nu, n_de = r_nu.size, r_de.size
    d1_nu = losses.l1_deriv(spec, r_nu)
    d1_de = losses.l1_deriv(spec, r_de)
    if corr.corrects(bd.term_clip_raw):
        return spec.C * d1_nu / n_nu, -d1_de / n_de, ASCENT, bd
    d2_nu = losses.l2_deriv(spec, r_nu)
    return (d2_nu - spec.C * d1_nu) / n_nu, d1_de / n_de, DESCENT, bd


def nnbr_gradient_signal(spec: LossSpec, model, nu, de, corr: CorrectionFn = RELU):
    X_nu, X_de = _samples(nu, de)
    u_nu, u_de, branch, _ = gradient_signal_from_values(
        spec, model.forward_batch(X_nu), model.forward_batch(X_de), corr)
    return u_nu, u_de, branch


def nnbr_param_gradient(spec: LossSpec, model, nu, de, corr: CorrectionFn = RELU):
    """Parameter gradient of the branch objective; returns ``(grad, branch, breakdown)``."""
    X_nu, X_de = _samples(nu, de)
    r_nu, c_nu = model.forward_cached(X_nu)
    r_de, c_de = model.forward_cached(X_de)
    u_nu, u_de, branch, bd = gradient_signal_from_values(spec, r_nu, r_de, corr)
    grad = model.backward(X_nu, u_nu, c_nu) + model.backward(X_de, u_de, c_de)
    return grad, branch, bd


# population oracles ----------------------------------------------------

@dataclass(frozen=True)
class Integral:
    value: float
    std_error: float
    method: str


def _require_exact_f(spec):
    if spec.family is Family.PULOG:
        raise UnsupportedFamily("no exact f-based Bregman divergence is provided for PULog")


def _check_problem(problem):
    for name in ("pdf_nu", "pdf_de", "true_ratio"):
        if not callable(getattr(problem, name, None)):
            raise QuadratureError(f"problem does not provide {name}()")


def population_br_exact(spec: LossSpec, model, problem, n_nodes=None, n_mc=1_000_000,
                        seed=0) -> Integral:
    """Shifted population risk
    ``int p_de (f'(r) r - f(r)) - int p_nu f'(r)`` with the exact ``f``.

    Tensor Gauss-Legendre quadrature for d <= 2, Monte Carlo otherwise.
    """
    _require_exact_f(spec)
    _check_problem(problem)
    if problem.dim <= 2:
        X, w = problem.quadrature_grid(n_nodes)
        r = model.forward_batch(X)
        fd = losses.f_deriv(spec, r)
        integrand = problem.pdf_de(X) * (fd * r - losses.f_value(spec, r)) - problem.pdf_nu(X) * fd
        return Integral(float(np.sum(w * integrand)), 0.0, "quadrature")
    X_de = problem.sample(Role.DENOMINATOR, n_mc, seed=seed).data
    X_nu = problem.sample(Role.NUMERATOR, n_mc, seed=seed).data
    r_de = model.forward_batch(X_de)
    a = losses.f_deriv(spec, r_de) * r_de - losses.f_value(spec, r_de)
    b = losses.f_deriv(spec, model.forward_batch(X_nu))
    se = np.sqrt(a.var(ddof=1) / n_mc + b.var(ddof=1) / n_mc)
    return Integral(float(a.mean() - b.mean()), float(se), "monte_carlo")


def population_divergence(spec: LossSpec, model, problem, n_nodes=None, n_mc=1_000_000,
                          seed=0) -> Integral:
    """Unshifted divergence
    ``int p_de (f(r*) - f(r) - f'(r)(r* - r))``, zero iff r = r* p_de-a.e."""
    _require_exact_f(spec)
    _check_problem(problem)
    if problem.dim <= 2:
        X, w = problem.quadrature_grid(n_nodes)
        weight = w * problem.pdf_de(X)
    else:
        X = problem.sample(Role.DENOMINATOR, n_mc, seed=seed).data
        weight = None
    r = model.forward_batch(X)
    rs = problem.true_ratio(X)
    pointwise = losses.f_value(spec, rs) - losses.f_value(spec, r) - losses.f_deriv(spec, r) * (rs - r)
    if weight is not None:
        return Integral(float(np.sum(weight * pointwise)), 0.0, "quadrature")
    return Integral(float(pointwise.mean()), float(pointwise.std(ddof=1) / np.sqrt(X.shape[0])),
                    "monte_carlo")


def population_l2(model, problem, n_nodes=None) -> float:
    """``||r - r*||^2`` in L2(p_de) by the same tensor quadrature."""
    X, w = problem.quadrature_grid(n_nodes)
    diff = model.forward_batch(X) - problem.true_ratio(X)
    return float(np.sum(w * problem.pdf_de(X) * diff * diff))
