import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnbr import losses
from nnbr.errors import DomainError
from nnbr.losses import Family, LossSpec


@pytest.mark.parametrize("fam,C,t,want", [
    ("LSIF", 1.0, 2.0, 2.0),
    ("BKL", 1.0, 1.0, math.log(2)),
    ("PULog", 1.0, 0.5, math.log(2)),
])
def test_l1_examples(fam, C, t, want):
    assert losses.l1(LossSpec(fam, C), t) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("fam,C,t,want", [
    ("LSIF", 1.0, 2.0, 0.0),
    ("UKL", 1.0, 1.0, 1.0),
    ("PULog", 0.5, 0.5, -0.5 * math.log(0.5)),
])
def test_l2_examples(fam, C, t, want):
    assert losses.l2(LossSpec(fam, C), t) == pytest.approx(want, abs=1e-12)


def test_derivative_examples():
    assert losses.l1_deriv(LossSpec("LSIF", 1.0), 3.0) == 3.0
    assert losses.l1_deriv(LossSpec("BKL", 1.0), 1.0) == pytest.approx(0.5)
    assert losses.l2_deriv(LossSpec("UKL", 0.5), 2.0) == pytest.approx(0.0, abs=1e-15)


def test_f_examples():
    assert losses.f_value(LossSpec("LSIF", 1.0), 1.0) == 0.0
    assert losses.f_deriv(LossSpec("UKL", 1.0), 1.0) == 0.0
    assert losses.f_value(LossSpec("BKL", 1.0), 1.0) == pytest.approx(-2 * math.log(2), rel=1e-12)


def test_scalar_in_scalar_out_and_shape_kept():
    spec = LossSpec("UKL", 0.5)
    assert isinstance(losses.l1(spec, 2.0), float)
    out = losses.l2(spec, np.ones((3, 2)))
    assert out.shape == (3, 2)


@pytest.mark.parametrize("fam,bad", [("LSIF", -0.1), ("UKL", 0.0), ("BKL", -1.0),
                                     ("PULog", 0.0), ("PULog", 1.0), ("LSIF", np.nan)])
def test_domain_errors(fam, bad):
    with pytest.raises(DomainError):
        losses.l1(LossSpec(fam, 0.5), bad)


def test_domain_bounds_inclusive_where_documented():
    assert losses.l1(LossSpec("LSIF", 0.5), 0.0) == 0.0
    spec = LossSpec("PULog", 0.5, pu_epsilon=1e-6)
    assert np.isfinite(losses.l2(spec, 1e-6)) and np.isfinite(losses.l1(spec, 1 - 1e-6))


@pytest.mark.parametrize("C", [0.0, -0.5, 1.5, np.nan])
def test_bad_C(C):
    with pytest.raises(ValueError):
        LossSpec("LSIF", C)


def test_family_parse():
    assert Family.parse("pulog") is Family.PULOG
    assert Family.parse("ukl") is Family.UKL
    with pytest.raises(ValueError):
        Family.parse("hinge")


def _t(fam):
    if fam == "PULog":
        return st.floats(0.01, 0.99)
    return st.floats(0.01, 50.0)


@pytest.mark.parametrize("fam", ["LSIF", "UKL", "BKL", "PULog"])
@settings(max_examples=200, deadline=None)
@given(data=st.data(), C=st.floats(0.05, 1.0))
def test_l1_nonnegative_and_fd(fam, data, C):
    spec = LossSpec(fam, C)
    t = data.draw(_t(fam))
    assert losses.l1(spec, t) >= 0.0
    h = 1e-6 * max(1.0, t)
    for fn, dfn in ((losses.l1, losses.l1_deriv), (losses.l2, losses.l2_deriv)):
        fd = (fn(spec, t + h) - fn(spec, t - h)) / (2 * h)
        a = dfn(spec, t)
        assert abs(a - fd) <= 1e-6 * max(1.0, abs(a), abs(fd))


@pytest.mark.parametrize("fam", ["LSIF", "UKL", "BKL"])
@settings(max_examples=200, deadline=None)
@given(C=st.floats(0.05, 1.0), t=st.floats(0.01, 50.0))
def test_decomposition_identity(fam, C, t):
    """f' = C l1 + f~ with l2 = -f~, so d/dt (C l1 - l2) = f''."""
    spec = LossSpec(fam, C)
    lhs = C * losses.l1_deriv(spec, t) - losses.l2_deriv(spec, t)
    assert lhs == pytest.approx(losses.f_second(spec, t), rel=1e-10)


@pytest.mark.parametrize("fam", ["LSIF", "UKL", "BKL"])
def test_l1_is_fprime_t_minus_f_up_to_constant(fam):
    spec = LossSpec(fam, 0.5)
    t = np.linspace(0.1, 8, 50)
    raw = losses.f_deriv(spec, t) * t - losses.f_value(spec, t)
    diff = raw - losses.l1(spec, t)
    assert np.ptp(diff) < 1e-12


@pytest.mark.parametrize("fam", ["LSIF", "UKL", "BKL"])
def test_f_convex(fam):
    spec = LossSpec(fam, 0.5)
    assert np.all(losses.f_second(spec, np.linspace(0.01, 20, 200)) > 0)


def test_pulog_fprime_matches_fd():
    spec = LossSpec("PULog", 0.5)
    t = np.linspace(0.05, 0.95, 30)
    h = 1e-6
    fd = (losses.f_value(spec, t + h) - losses.f_value(spec, t - h)) / (2 * h)
    assert np.allclose(losses.f_deriv(spec, t), fd, rtol=1e-6, atol=1e-8)
