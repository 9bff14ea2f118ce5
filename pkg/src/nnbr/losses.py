"""Bregman loss families and their non-negative decomposition.

Each family is generated by a convex ``f``; training uses the split

    l1(t) = f'(t) t - f(t)    (non-negative part)
    l2(t) = -f~(t)            with f'(t) = C l1(t) + f~(t)

in the display forms below, which differ from the raw expressions only by
additive constants (LSIF: the raw l1 is (t^2 - 1)/2)::

    LSIF   l1 = t^2/2         l2 = C t^2/2 - t
    UKL    l1 = t             l2 = C t - log t
    BKL    l1 = log(1+t)      l2 = -log(t/(1+t)) + C log(1+t)
    PULog  l1 = -log(1-t)     l2 = -C log t

All functions accept scalars or arrays and return the same shape.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError


class Family(str, Enum):
    LSIF = "LSIF"
    UKL = "UKL"
    BKL = "BKL"
    PULOG = "PULog"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        for fam in cls:
            if fam.value.lower() == key:
                return fam
        if key in ("pu", "pulogloss"):
            return cls.PULOG
        raise ValueError(f"unknown loss family {name!r}")


@dataclass(frozen=True)
class LossDomain:
    lower: float
    upper: float
    lower_closed: bool
    upper_closed: bool

    def contains(self, t):
        t = np.asarray(t, dtype=np.float64)
        lo = t >= self.lower if self.lower_closed else t > self.lower
        hi = t <= self.upper if self.upper_closed else t < self.upper
        return np.isfinite(t) & lo & hi


@dataclass(frozen=True)
class LossSpec:
    """A loss family together with the constant ``C`` (a stand-in for 1/R̄)."""

    family: Family
    C: float
    pu_epsilon: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not 0.0 < self.C <= 1.0:
            raise ValueError(f"C must lie in (0, 1], got {self.C}")
        if not 0.0 < self.pu_epsilon < 0.5:
            raise ValueError(f"pu_epsilon must lie in (0, 0.5), got {self.pu_epsilon}")

    @property
    def domain(self) -> LossDomain:
        if self.family is Family.LSIF:
            return LossDomain(0.0, np.inf, True, False)
        if self.family is Family.PULOG:
            # closed: the clamped sigmoid link saturates exactly at the bounds
            return LossDomain(self.pu_epsilon, 1.0 - self.pu_epsilon, True, True)
        return LossDomain(0.0, np.inf, False, False)


def _check(spec, t):
    arr = np.asarray(t, dtype=np.float64)
    ok = spec.domain.contains(arr)
    if not np.all(ok):
        bad = arr[~ok] if arr.ndim else arr
        raise DomainError(
            f"{spec.family.value}: value(s) outside domain {spec.domain}: "
            f"{np.ravel(bad)[:5]}"
        )
    return arr


def _out(arr, t):
    return float(arr) if np.ndim(t) == 0 else arr


def l1(spec: LossSpec, t):
    x = _check(spec, t)
    fam = spec.family
    if fam is Family.LSIF:
        v = 0.5 * x * x
    elif fam is Family.UKL:
        v = x.copy()
    elif fam is Family.BKL:
        v = np.log1p(x)
    else:
        v = -np.log1p(-x)
    return _out(v, t)


def l2(spec: LossSpec, t):
    x = _check(spec, t)
    fam, C = spec.family, spec.C
    if fam is Family.LSIF:
        v = 0.5 * C * x * x - x
    elif fam is Family.UKL:
        v = C * x - np.log(x)
    elif fam is Family.BKL:
        v = -np.log(x) + (1.0 + C) * np.log1p(x)
    else:
        v = -C * np.log(x)
    return _out(v, t)


def l1_deriv(spec: LossSpec, t):
    x = _check(spec, t)
    fam = spec.family
    if fam is Family.LSIF:
        v = x.copy()
    elif fam is Family.UKL:
        v = np.ones_like(x)
    elif fam is Family.BKL:
        v = 1.0 / (1.0 + x)
    else:
        v = 1.0 / (1.0 - x)
    return _out(v, t)


def l2_deriv(spec: LossSpec, t):
    x = _check(spec, t)
    fam, C = spec.family, spec.C
    if fam is Family.LSIF:
        v = C * x - 1.0
    elif fam is Family.UKL:
        v = C - 1.0 / x
    elif fam is Family.BKL:
        v = -1.0 / x + (1.0 + C) / (1.0 + x)
    else:
        v = -C / x
    return _out(v, t)


def f_value(spec: LossSpec, t):
    """Generator ``f`` of the exact (unshifted) Bregman divergence."""
    x = _check(spec, t)
    fam, C = spec.family, spec.C
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam is Family.LSIF:
            v = 0.5 * (x - 1.0) ** 2
        elif fam is Family.UKL:
            v = x * np.log(x) - x
        elif fam is Family.BKL:
            v = x * np.log(x) - (1.0 + x) * np.log1p(x)
        else:
            v = np.log1p(-x) + C * x * (np.log(x) - np.log1p(-x))
    return _out(v, t)


def f_deriv(spec: LossSpec, t):
    x = _check(spec, t)
    fam, C = spec.family, spec.C
    if fam is Family.LSIF:
        v = x - 1.0
    elif fam is Family.UKL:
        v = np.log(x)
    elif fam is Family.BKL:
        v = np.log(x) - np.log1p(x)
    else:
        v = (C - 1.0) / (1.0 - x) + C * (np.log(x) - np.log1p(-x))
    return _out(v, t)


def f_second(spec: LossSpec, t):
    """``f''`` for the three families with a decomposition identity."""
    x = _check(spec, t)
    fam = spec.family
    if fam is Family.LSIF:
        v = np.ones_like(x)
    elif fam is Family.UKL:
        v = 1.0 / x
    elif fam is Family.BKL:
        v = 1.0 / (x * (1.0 + x))
    else:
        C = spec.C
        v = (C - 1.0) / (1.0 - x) ** 2 + C / (x * (1.0 - x))
    return _out(v, t)
