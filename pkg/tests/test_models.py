import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnbr import kernels
from nnbr.errors import ShapeError
from nnbr.models import (CappedModel, ConstantModel, FunctionModel, KernelLinearModel,
                         MlpRatioModel, Role, SampleSet, dumps_model, load_model,
                         median_bandwidth, model_from_dict, save_model)


def test_zero_mlp_is_softplus_of_zero():
    m = MlpRatioModel([3, 5, 1], "softplus")
    out = m.forward_batch(np.random.default_rng(0).standard_normal((7, 3)))
    assert np.allclose(out, math.log(2), rtol=0, atol=1e-15)


def test_zero_kernel_model_and_capped():
    k = KernelLinearModel(np.zeros((4, 2)), 1.0)
    assert np.all(k.forward_batch(np.ones((3, 2))) == 0.0)
    capped = CappedModel(ConstantModel(5.0, 1), 2.0)
    assert capped.forward(np.array([0.3])) == 2.0


def test_forward_batch_examples():
    c = ConstantModel(1.0, 2)
    assert c.forward_batch(np.zeros((3, 2))).tolist() == [1.0, 1.0, 1.0]
    m = MlpRatioModel.init([2, 4, 1], seed=1)
    x = np.array([[0.3, -0.2]])
    assert m.forward_batch(x)[0] == m.forward(x[0])
    with pytest.raises(ShapeError):
        m.forward_batch(np.zeros((0, 2)))
    with pytest.raises(ShapeError):
        m.forward_batch(np.zeros((3, 5)))


def test_init_output_is_one():
    m = MlpRatioModel.init([1, 8, 1], seed=0)
    W, b = m.layer(1)
    assert b[0] == pytest.approx(math.log(math.expm1(1.0)))
    assert MlpRatioModel.init([1, 1], "sigmoid_clamped").forward(np.zeros(1)) == pytest.approx(0.5)


def test_flat_layout_matches_layers():
    m = MlpRatioModel.init([3, 4, 2, 1], seed=2)
    X = np.random.default_rng(1).standard_normal((5, 3))
    h = X
    for l in range(2):
        W, b = m.layer(l)
        h = np.maximum(h @ W + b, 0)
    W, b = m.layer(2)
    z = (h @ W + b)[:, 0]
    assert np.allclose(m.forward_batch(X), np.logaddexp(0, z), rtol=1e-14)


def test_zero_upstream_zero_gradient():
    m = MlpRatioModel.init([2, 6, 1], seed=0)
    X = np.ones((4, 2))
    assert np.all(m.backward(X, np.zeros(4)) == 0)


def test_kernel_gradient_is_design_transpose():
    rng = np.random.default_rng(3)
    k = KernelLinearModel(rng.standard_normal((6, 2)), 0.7, rng.uniform(0.1, 1, 6),
                          clip_negative=False)
    X = rng.standard_normal((9, 2))
    u = rng.standard_normal(9)
    assert np.allclose(k.backward(X, u), k.design(X).T @ u, rtol=1e-14)


def _fd(model, X, u, h=1e-6):
    theta = model.params.copy()
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        model.params = theta + e
        fp = u @ model.forward_batch(X)
        model.params = theta - e
        fm = u @ model.forward_batch(X)
        g[i] = (fp - fm) / (2 * h)
    model.params = theta
    return g


@pytest.mark.parametrize("widths,link", [([2, 8, 1], "softplus"), ([3, 6, 5, 1], "exp"),
                                         ([1, 10, 1], "sigmoid_clamped")])
def test_mlp_backward_matches_fd(widths, link):
    rng = np.random.default_rng(len(widths))
    m = MlpRatioModel.init(widths, link, seed=4)
    m.params = m.params + 0.1 * rng.standard_normal(m.n_params)
    X = rng.standard_normal((12, widths[0]))
    u = rng.standard_normal(12)
    g = m.backward(X, u)
    fd = _fd(m, X, u)
    assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)


def test_capped_backward_masks_capped_rows():
    inner = MlpRatioModel.init([1, 4, 1], seed=0)
    X = np.linspace(-2, 2, 9)[:, None]
    cap = float(np.median(inner.forward_batch(X)))
    m = CappedModel(inner, cap)
    u = np.ones(9)
    mask = inner.forward_batch(X) < cap
    assert np.allclose(m.backward(X, u), inner.backward(X, mask * u))


@pytest.mark.parametrize("model", [
    MlpRatioModel.init([2, 5, 3, 1], "exp", seed=9),
    KernelLinearModel(np.arange(6.0).reshape(3, 2), 0.5, [0.1, -0.2, 0.3]),
    CappedModel(MlpRatioModel.init([2, 3, 1], seed=1), 1.5),
    ConstantModel(0.25, 2),
])
def test_serialization_roundtrip(model, tmp_path):
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    X = np.random.default_rng(0).standard_normal((20, 2))
    assert np.array_equal(back.forward_batch(X), model.forward_batch(X))
    assert dumps_model(back) == dumps_model(model)


def test_function_model_not_serializable():
    with pytest.raises(TypeError):
        dumps_model(FunctionModel(lambda X: X[:, 0] ** 2, 1))


def test_unknown_kind():
    with pytest.raises(ValueError):
        model_from_dict({"model": "forest"})


def test_json_is_sorted_and_17_digit():
    doc = json.loads(dumps_model(KernelLinearModel([[0.1]], 0.3, [1 / 3])))
    assert list(doc) == sorted(doc)
    assert doc["theta"][0] == 1 / 3


def test_sampleset_validation():
    s = SampleSet([1.0, 2.0, 3.0], "numerator")
    assert s.role is Role.NUMERATOR and s.d == 1 and len(s) == 3
    with pytest.raises(ShapeError):
        SampleSet([[np.inf]], Role.DENOMINATOR)
    with pytest.raises(ValueError):
        SampleSet([[1.0]], "test")


def test_median_bandwidth():
    assert median_bandwidth(np.array([[0.0], [1.0], [3.0]])) == 2.0
    assert median_bandwidth(np.zeros((4, 2))) == 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 30))
def test_mlp_output_in_range(seed, n):
    rng = np.random.default_rng(seed)
    for link in kernels.LINK_CODES:
        m = MlpRatioModel.init([2, 7, 1], link, seed=seed)
        r = m.forward_batch(rng.standard_normal((n, 2)) * 3)
        assert np.all(r >= m.lower) and np.all(r <= m.upper)
