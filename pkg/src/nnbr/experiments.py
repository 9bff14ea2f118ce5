"""Seeded synthetic benchmark: train one ratio estimator per (method, seed)
on a :class:`SyntheticProblem` and evaluate it on a fixed held-out draw."""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import baselines, evalkit
from .apps import NN_METHODS
from .errors import ConfigError, ConvergenceWarning
from .losses import LossSpec
from .models import FunctionModel, MlpRatioModel, Role
from .trainer import Holdout, TrainConfig, TrainTrace, train

HOLDOUT_SEED = 9999
BENCH_METHODS = ("true_ratio", "kernel_ulsif", "kernel_kliep") + tuple(NN_METHODS)


@dataclass(frozen=True)
class MethodSpec:
    name: str
    C: float = None

    @classmethod
    def parse(cls, token):
        """``name`` or ``name:C``."""
        name, _, c = token.strip().partition(":")
        name = name.strip().lower()
        if name not in BENCH_METHODS:
            raise ConfigError(f"unknown method {name!r}; expected one of {', '.join(BENCH_METHODS)}")
        if not c:
            return cls(name)
        try:
            C = float(c)
        except ValueError as exc:
            raise ConfigError(f"bad C in method {token!r}") from exc
        if not 0.0 < C <= 1.0:
            raise ConfigError(f"C must lie in (0, 1], got {C}")
        return cls(name, C)

    @property
    def label(self):
        return self.name if self.C is None else f"{self.name}:{self.C:g}"


@dataclass
class BenchSettings:
    n_nu: int = 200
    n_de: int = 200
    n_hold: int = 1000
    n_labeled: int = 1000
    hidden: tuple = (32, 32)
    link: str = "softplus"
    epochs: int = 2000
    batch_size: int = 5
    learning_rate: float = 1e-3
    lam: float = 0.0
    n_basis: int = 100

    def __post_init__(self):
        for name in ("n_nu", "n_de", "n_hold", "n_labeled", "epochs", "batch_size", "n_basis"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.learning_rate > 0 or self.lam < 0:
            raise ConfigError("need learning_rate > 0 and lam >= 0")


@dataclass
class RunResult:
    method: str
    C: float
    seed: int
    auroc: float
    l2_error: float
    l2_se: float
    e_de_r: float
    final_risk: float
    trace: TrainTrace = None
    model: object = None


def default_C(problem):
    sup = problem.sup_ratio()
    return 1.0 / sup if math.isfinite(sup) else 0.5


def holdout_for(problem, settings: BenchSettings):
    X_hold = problem.sample(Role.DENOMINATOR, settings.n_hold, seed=HOLDOUT_SEED).data
    X_lab, y_lab = problem.sample_labeled(settings.n_labeled, seed=HOLDOUT_SEED)
    return Holdout(de=X_hold, X_labeled=X_lab, y_labeled=y_lab, problem=problem)


def run_method(problem, method: MethodSpec, seed, settings: BenchSettings = None, holdout=None):
    """Train (if needed) and evaluate one method on the draws of ``seed``.

    Training data: ``problem.sample(role, n, seed)``; the held-out draw is
    shared across seeds. Neural methods use the mini-batch trainer with the
    model, data order and initialization all keyed by ``seed``.
    """
    settings = settings or BenchSettings()
    holdout = holdout or holdout_for(problem, settings)
    nu = problem.sample(Role.NUMERATOR, settings.n_nu, seed=seed)
    de = problem.sample(Role.DENOMINATOR, settings.n_de, seed=seed)
    C = method.C if method.C is not None else default_C(problem)
    trace = None
    final_risk = float("nan")
    score_scale = 1.0
    if method.name == "true_ratio":
        model = FunctionModel(problem.true_ratio, problem.dim, upper=problem.sup_ratio())
    elif method.name == "kernel_ulsif":
        model = baselines.fit_ulsif_cv(nu.data, de.data, n_basis=settings.n_basis, seed=seed)
    elif method.name == "kernel_kliep":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model = baselines.fit_kliep_kernel(nu.data, de.data, n_basis=settings.n_basis,
                                               seed=seed)
    else:
        family, corr = NN_METHODS[method.name]
        spec = LossSpec(family, C)
        link = "sigmoid_clamped" if family == "PULog" else settings.link
        model = MlpRatioModel.init([problem.dim, *settings.hidden, 1], link, seed=seed)
        config = TrainConfig(learning_rate=settings.learning_rate, lam=settings.lam,
                             batch_size_nu=settings.batch_size, batch_size_de=settings.batch_size,
                             epochs=settings.epochs, seed=seed, correction=corr)
        model, trace = train(model, spec, nu, de, config, holdout)
        final_risk = float(trace.risk[-1])
        if family == "PULog":
            score_scale = 1.0 / C
    r_hold = model.forward_batch(holdout.de) * score_scale
    sq = (r_hold - problem.true_ratio(holdout.de)) ** 2
    auroc = evalkit.auroc(model.forward_batch(holdout.X_labeled), holdout.y_labeled)
    return RunResult(method.label, C, int(seed), auroc, float(sq.mean()),
                     float(sq.std(ddof=1) / np.sqrt(sq.size)), float(r_hold.mean()), final_risk,
                     trace, model)


SUMMARY_HEADER = ("method", "C", "seeds", "mean_auroc", "sd_auroc", "mean_l2", "sd_l2",
                  "mean_e_de_r", "sd_e_de_r", "mean_final_risk")
RUNS_HEADER = ("method", "C", "seed", "auroc", "l2_error", "l2_se", "e_de_r", "final_risk")


def _sd(v):
    return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0


def summarize(results):
    """One row per method label, in first-seen order."""
    rows, order = {}, []
    for r in results:
        if r.method not in rows:
            rows[r.method] = []
            order.append(r.method)
        rows[r.method].append(r)
    out = []
    for label in order:
        rs = rows[label]
        a = [r.auroc for r in rs]
        l2 = [r.l2_error for r in rs]
        e = [r.e_de_r for r in rs]
        out.append((label, rs[0].C, len(rs), float(np.mean(a)), _sd(a), float(np.mean(l2)),
                    _sd(l2), float(np.mean(e)), _sd(e), float(np.mean([r.final_risk for r in rs]))))
    return out
