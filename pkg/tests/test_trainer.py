import math

import numpy as np
import pytest

from nnbr import kernels
from nnbr.errors import ConfigError, NumericalError
from nnbr.evalkit import SyntheticProblem
from nnbr.losses import LossSpec
from nnbr.models import KernelLinearModel, MlpRatioModel, Role
from nnbr.risk import IDENTITY, RELU, CorrectionFn
from nnbr.trainer import (TRACE_HEADER, AdamState, Holdout, TrainConfig, adam_step,
                          make_minibatches, minibatch_indices, train, write_trace_csv)

PROBLEM = SyntheticProblem("gauss_shift", 1, 0.5, (2.0,))


def test_minibatch_examples():
    cfg = TrainConfig(batch_size_nu=2, batch_size_de=2)
    b = minibatch_indices(4, 4, cfg, 0)
    assert [(len(i), len(j)) for i, j in b] == [(2, 2), (2, 2)]
    b = minibatch_indices(2, 4, cfg, 0)
    assert len(b) == 2
    assert sorted(b[0][0]) == sorted(b[1][0]) == [0, 1]   # numerator wraps
    assert sorted(np.concatenate([j for _, j in b])) == [0, 1, 2, 3]


def test_minibatches_deterministic_and_epoch_dependent():
    cfg = TrainConfig(batch_size_nu=3, batch_size_de=5, seed=4)
    a = minibatch_indices(10, 17, cfg, 2)
    b = minibatch_indices(10, 17, cfg, 2)
    c = minibatch_indices(10, 17, cfg, 3)
    assert all(np.array_equal(x[0], y[0]) and np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    assert any(not np.array_equal(x[0], y[0]) for x, y in zip(a, c))


def test_each_long_stream_sample_used_once_per_epoch():
    cfg = TrainConfig(batch_size_nu=3, batch_size_de=4, seed=1)
    b = minibatch_indices(10, 40, cfg, 0)
    assert len(b) == 10
    assert sorted(np.concatenate([j for _, j in b]).tolist()) == list(range(40))
    assert all(len(i) == 3 for i, _ in b)


def test_no_wrap():
    cfg = TrainConfig(batch_size_nu=2, batch_size_de=2, wrap=False)
    assert len(minibatch_indices(2, 6, cfg, 0)) == 1
    with pytest.raises(ConfigError):
        minibatch_indices(1, 6, cfg, 0)


def test_make_minibatches_rows():
    X = np.arange(6.0)[:, None]
    cfg = TrainConfig(batch_size_nu=3, batch_size_de=3, shuffle=False)
    (a, b), (c, d) = make_minibatches(X, X + 10, cfg, 0)
    assert a[:, 0].tolist() == [0, 1, 2] and d[:, 0].tolist() == [13, 14, 15]


@pytest.mark.parametrize("kwargs", [dict(learning_rate=0), dict(beta1=0.999, beta2=0.9),
                                    dict(lam=-1), dict(regularizer="l3"), dict(epochs=0),
                                    dict(batch_size_nu=0)])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_adam_examples():
    cfg = TrainConfig(learning_rate=0.1)
    st = AdamState.zeros(1)
    st1, p1 = adam_step(st, np.array([2.0]), np.array([0.0]), cfg)
    assert p1[0] == 2.0 and st1.t == 1
    st1, p1 = adam_step(st, np.array([0.0]), np.array([1.0]), cfg)
    assert st1.m[0] == pytest.approx(0.1) and st1.v[0] == pytest.approx(0.001)
    assert p1[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-12)
    st2, p2 = adam_step(st1, p1, np.array([1.0]), cfg)
    assert abs(p2[0] - p1[0]) <= abs(p1[0]) * (1 + 1e-6)


def test_zero_gradient_keeps_params():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((8, 1))
    m = KernelLinearModel(X, 1.0, np.ones(8), clip_negative=False)
    st = AdamState.zeros(8)
    p = m.params.copy()
    for _ in range(5):
        st, p = adam_step(st, p, np.zeros(8), TrainConfig())
    assert np.array_equal(p, m.params)


def test_l2_penalty_shrinks_norm():
    cfg = TrainConfig(learning_rate=1e-3, lam=0.1)
    p = np.random.default_rng(1).uniform(0.5, 2.0, 20) * np.sign(np.arange(20) - 9.5)
    st = AdamState.zeros(20)
    norms = [np.linalg.norm(p)]
    for _ in range(50):
        st, p = adam_step(st, p, cfg.lam * p, cfg)
        norms.append(np.linalg.norm(p))
    assert np.all(np.diff(norms) < 0)


def _data(seed, n=100):
    return (PROBLEM.sample(Role.NUMERATOR, n, seed=seed),
            PROBLEM.sample(Role.DENOMINATOR, n, seed=seed))


def test_trace_deterministic(tmp_path):
    nu, de = _data(0)
    hold = Holdout(de=PROBLEM.sample(Role.DENOMINATOR, 200, seed=5).data, problem=PROBLEM)
    cfg = TrainConfig(batch_size_nu=10, batch_size_de=10, epochs=5, seed=2)
    paths = []
    for k in range(2):
        m = MlpRatioModel.init([1, 8, 1], seed=1)
        m, tr = train(m, LossSpec("BKL", 0.5), nu, de, cfg, hold)
        paths.append(tmp_path / f"t{k}.csv")
        write_trace_csv(tr, paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    lines = paths[0].read_text().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER) and len(lines) == 6


def test_branch_bookkeeping_with_relu():
    nu, de = _data(1)
    m = MlpRatioModel.init([1, 16, 1], seed=0)
    cfg = TrainConfig(batch_size_nu=5, batch_size_de=5, epochs=30, learning_rate=1e-2, seed=0)
    _, tr = train(m, LossSpec("LSIF", 0.5), nu, de, cfg)
    assert np.all((tr.ascent_frac >= 0) & (tr.ascent_frac <= 1))
    assert np.all(tr.risk >= -1.0)                # bound -1/(2C)


def test_identity_never_ascends():
    nu, de = _data(2)
    m = MlpRatioModel.init([1, 8, 1], seed=0)
    cfg = TrainConfig(batch_size_nu=5, batch_size_de=5, epochs=5, correction=IDENTITY)
    _, tr = train(m, LossSpec("LSIF", 0.5), nu, de, cfg)
    assert np.all(tr.ascent_frac == 0)


def test_custom_correction_uses_python_path():
    nu, de = _data(3, 40)
    soft = CorrectionFn("custom", lambda x: max(x, 0.0))
    cfg = TrainConfig(batch_size_nu=8, batch_size_de=8, epochs=3)
    a, ta = train(MlpRatioModel.init([1, 6, 1], seed=0), LossSpec("UKL", 0.5), nu, de,
                  TrainConfig(batch_size_nu=8, batch_size_de=8, epochs=3, correction=soft))
    b, tb = train(MlpRatioModel.init([1, 6, 1], seed=0), LossSpec("UKL", 0.5), nu, de, cfg,
                  fused=False)
    assert np.allclose(a.params, b.params, rtol=1e-12)


def test_kernel_model_trains():
    nu, de = _data(4)
    m = KernelLinearModel(nu.data[:20], 1.0, np.full(20, 0.1))
    _, tr = train(m, LossSpec("LSIF", 0.5), nu, de,
                  TrainConfig(batch_size_nu=20, batch_size_de=20, epochs=20, learning_rate=1e-2))
    assert tr.risk[-1] < tr.risk[0]


def test_range_domain_mismatch():
    nu, de = _data(5, 10)
    with pytest.raises(ConfigError):
        train(MlpRatioModel.init([1, 4, 1], "softplus"), LossSpec("PULog", 0.5), nu, de,
              TrainConfig())
    with pytest.raises(ConfigError):
        train(MlpRatioModel.init([1, 4, 1]), LossSpec("LSIF", 0.5), de, nu, TrainConfig())


@pytest.mark.parametrize("fused", [False, True] if kernels.HAVE_NUMBA else [False])
def test_divergence_raises_numerical_error(fused):
    nu, de = _data(6, 50)
    m = MlpRatioModel.init([1, 8, 1], "exp", seed=0)
    cfg = TrainConfig(batch_size_nu=5, batch_size_de=5, epochs=200, learning_rate=50.0,
                      correction=IDENTITY)
    with pytest.raises(NumericalError) as info:
        train(m, LossSpec("UKL", 0.5), nu, de, cfg, fused=fused)
    model, trace = info.value.state
    assert np.all(np.isfinite(model.params))
    assert len(trace) < 200 and np.all(np.isfinite(trace.risk))


def test_holdout_metrics_filled():
    nu, de = _data(7)
    X_lab, y_lab = PROBLEM.sample_labeled(300, seed=1)
    hold = Holdout(de=PROBLEM.sample(Role.DENOMINATOR, 300, seed=2).data, X_labeled=X_lab,
                   y_labeled=y_lab, problem=PROBLEM)
    _, tr = train(MlpRatioModel.init([1, 8, 1], seed=0), LossSpec("LSIF", 0.5), nu, de,
                  TrainConfig(batch_size_nu=20, batch_size_de=20, epochs=3), hold)
    assert np.all(np.isfinite(tr.e_de_r)) and np.all(np.isfinite(tr.auroc))
    assert np.all(np.isfinite(tr.l2_error))


# Frozen from a pre-study on data seeds 100..109 (batch 50: nnBR mean L2 0.035 vs
# uncorrected 0.053). At batch 5 and 1 the ordering reverses at this budget, because
# 200 epochs on n = 500 stop before the uncorrected fit starts to overfit.
BS_N500 = 50
N500_SEEDS = 10


def test_nnbr_beats_uncorrected_at_n500():
    """n = 500, MLP [1,32,32,1], 200 epochs, C = 1/2, fresh seeds 0..9."""
    settings = dict(learning_rate=1e-3, batch_size_nu=BS_N500, batch_size_de=BS_N500, epochs=200)
    hold = Holdout(de=PROBLEM.sample(Role.DENOMINATOR, 1000, seed=9999).data, problem=PROBLEM)
    l2, e_de = {}, {}
    for corr in (RELU, IDENTITY):
        l2[corr.kind], e_de[corr.kind] = [], []
        for seed in range(N500_SEEDS):
            nu = PROBLEM.sample(Role.NUMERATOR, 500, seed)
            de = PROBLEM.sample(Role.DENOMINATOR, 500, seed)
            m = MlpRatioModel.init([1, 32, 32, 1], seed=seed)
            _, tr = train(m, LossSpec("LSIF", 0.5), nu, de,
                          TrainConfig(seed=seed, correction=corr, **settings), hold)
            l2[corr.kind].append(tr.l2_error[-1])
            e_de[corr.kind].append(tr.e_de_r[-1])
    assert all(0.85 <= e <= 1.15 for e in e_de["relu"]), e_de["relu"]
    assert np.mean(l2["relu"]) < np.mean(l2["identity"]), (l2["relu"], l2["identity"])


def test_trace_fmt_roundtrip(tmp_path):
    from nnbr.dataio import fmt
    for x in (0.1, 1 / 3, -2.5e-300, 123456789.123456789, math.pi):
        assert float(fmt(x)) == x
    assert fmt(float("nan")) == "nan"
