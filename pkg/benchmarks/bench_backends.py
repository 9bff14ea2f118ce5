"""Compare the numba kernels with the pure-numpy fallback.

Part 1 times the individual kernels in-process (both backends are always
importable when numba is installed). Part 2 times a full training run in
two subprocesses, one with ``NNBR_DISABLE_NUMBA=1``, and checks that the
final parameters agree.

    python3 benchmarks/bench_backends.py [--epochs 50] [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from nnbr import kernels

TRAIN_SCRIPT = """
import json, time
from nnbr import backend
from nnbr.evalkit import SyntheticProblem
from nnbr.losses import LossSpec
from nnbr.models import MlpRatioModel, Role
from nnbr.trainer import TrainConfig, train
p = SyntheticProblem("gauss_shift", 1, 0.5, (2.0,))
nu, de = p.sample(Role.NUMERATOR, 200, 0), p.sample(Role.DENOMINATOR, 200, 0)
cfg = TrainConfig(batch_size_nu=5, batch_size_de=5, epochs={epochs}, seed=0)
m = MlpRatioModel.init([1, 32, 32, 1], seed=0)
train(MlpRatioModel.init([1, 32, 32, 1], seed=0), LossSpec("LSIF", 0.5), nu, de,
      TrainConfig(batch_size_nu=5, batch_size_de=5, epochs=1))   # warm-up / compile
t0 = time.perf_counter()
m, _ = train(m, LossSpec("LSIF", 0.5), nu, de, cfg)
print(json.dumps({{"backend": backend(), "seconds": time.perf_counter() - t0,
                  "params": m.params.tolist()}}))
"""


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(repeat):
    rng = np.random.default_rng(0)
    widths = np.array([1, 32, 32, 1], dtype=np.int64)
    theta = 0.1 * rng.standard_normal(kernels.n_params(widths))
    X = rng.standard_normal((1000, 1))
    u = rng.standard_normal(1000)
    Xs, us = X[:5], u[:5]
    A, C = rng.standard_normal((2000, 2)), rng.standard_normal((100, 2))
    pos, neg = rng.standard_normal(1000), rng.standard_normal(1000)
    _, z, h = kernels.mlp_forward_numpy(X, theta, list(widths), 0, 1e-6)
    _, zs, hs = kernels.mlp_forward_numpy(Xs, theta, list(widths), 0, 1e-6)
    cases = {
        "mlp_forward (n=5)": (lambda: kernels.mlp_forward_numpy(Xs, theta, list(widths), 0, 1e-6),
                              lambda: kernels.mlp_forward_numba(Xs, theta, widths, 0, 1e-6)),
        "mlp_backward (n=5)": (
            lambda: kernels.mlp_backward_numpy(Xs, theta, list(widths), hs, zs, us, 0, 1e-6),
            lambda: kernels.mlp_backward_numba(Xs, theta, widths, hs, zs, us, 0, 1e-6)),
        "mlp_forward (n=1000)": (lambda: kernels.mlp_forward_numpy(X, theta, list(widths), 0, 1e-6),
                                 lambda: kernels.mlp_forward_numba(X, theta, widths, 0, 1e-6)),
        "mlp_backward (n=1000)": (
            lambda: kernels.mlp_backward_numpy(X, theta, list(widths), h, z, u, 0, 1e-6),
            lambda: kernels.mlp_backward_numba(X, theta, widths, h, z, u, 0, 1e-6)),
        "gaussian_gram (2000x100)": (lambda: kernels.gaussian_gram_numpy(A, C, 1.0),
                                     lambda: kernels.gaussian_gram_numba(A, C, 1.0)),
        "pairwise_auc (1000x1000)": (lambda: kernels.pairwise_auc_numpy(pos, neg),
                                     lambda: kernels.pairwise_auc_numba(pos, neg)),
    }
    print(f"{'kernel':28s} {'numpy us':>10s} {'numba us':>10s} {'speedup':>8s}")
    for name, (f_np, f_nb) in cases.items():
        f_nb()                                   # compile outside the timing
        t_np, t_nb = _best(f_np, repeat), _best(f_nb, repeat)
        print(f"{name:28s} {1e6 * t_np:10.1f} {1e6 * t_nb:10.1f} {t_np / t_nb:8.1f}")


def _train(env_value, epochs):
    env = dict(os.environ)
    env.pop("NNBR_DISABLE_NUMBA", None)
    if env_value:
        env["NNBR_DISABLE_NUMBA"] = env_value
    out = subprocess.run([sys.executable, "-c", TRAIN_SCRIPT.format(epochs=epochs)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def training_table(epochs):
    fast, slow = _train(None, epochs), _train("1", epochs)
    gap = float(np.max(np.abs(np.subtract(fast["params"], slow["params"]))))
    print(f"\ntraining [1,32,32,1], n=200+200, batch 5, {epochs} epochs")
    for r in (slow, fast):
        print(f"  {r['backend']:6s} {r['seconds']:8.2f} s")
    print(f"  speedup {slow['seconds'] / fast['seconds']:.1f}x, max |param gap| {gap:.2e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    kernel_table(args.repeat)
    training_table(args.epochs)


if __name__ == "__main__":
    main()
