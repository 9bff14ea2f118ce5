"""Command-line front end.

    nnbr train --nu NU.csv --de DE.csv --config run.cfg --out DIR
    nnbr score --model model.json --data X.csv --out scores.txt
    nnbr synth-bench --problem gauss_shift:dim=1,pi=0.5,shift=2 --methods nnbr_lsif,ulsif_nn --seeds 10 --out DIR
    nnbr covshift --config shift.cfg --out DIR

Exit codes: 0 success, 2 bad input or configuration, 3 numerical failure.
Inputs are validated before anything is written.
"""
import argparse
import csv
import os
import sys

import numpy as np

from . import apps, dataio, evalkit, experiments
from .errors import NNBRError, NumericalError, SingularMatrixError
from .kernels import LINK_CODES as LINKS
from .losses import LossSpec
from .models import MlpRatioModel, load_model
from .risk import correction_from_name, risk_from_values
from .trainer import Holdout, TrainConfig, train, write_trace_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
HOLD_SEED = experiments.HOLDOUT_SEED


class UsageError(NNBRError):
    pass


# value parsing ----------------------------------------------------------------

def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


def _int(s):
    try:
        return int(s)
    except ValueError:
        raise UsageError(f"not an integer: {s!r}") from None


def _float(s):
    try:
        return float(s)
    except ValueError:
        raise UsageError(f"not a number: {s!r}") from None


def _ints(s):
    return tuple(_int(t) for t in s.split(",") if t.strip())


def parse_arch(text):
    """``mlp:<w0>,...,<wL>[:<link>]`` -> ``(widths, link)``."""
    parts = text.strip().split(":")
    if parts[0] != "mlp" or len(parts) not in (2, 3):
        raise UsageError(f"bad architecture {text!r}; expected mlp:1,32,32,1:softplus")
    widths = list(_ints(parts[1]))
    link = parts[2] if len(parts) == 3 else "softplus"
    if len(widths) < 2 or min(widths) < 1 or widths[-1] != 1:
        raise UsageError(f"bad widths in {text!r}; need >= 2 positive widths ending in 1")
    if link not in LINKS:
        raise UsageError(f"unknown link {link!r}")
    return widths, link


def parse_problem(text):
    """``kind[:key=value,...]``; ``shift`` vectors use ``;`` between entries."""
    kind, _, rest = text.strip().partition(":")
    kw = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, value = item.partition("=")
        key = key.strip()
        if not eq:
            raise UsageError(f"bad problem option {item!r}")
        if key in ("dim", "seed"):
            kw[key] = _int(value)
        elif key in ("pi", "scale_nu", "scale_de"):
            kw[key] = _float(value)
        elif key == "shift":
            kw[key] = tuple(_float(v) for v in value.split(";"))
        else:
            raise UsageError(f"unknown problem option {key!r}")
    return evalkit.SyntheticProblem(kind.strip(), **kw)


TRAIN_DEFAULTS = {
    "family": "LSIF",
    "C": "0.5",
    "pu_epsilon": "1e-06",
    "arch": "",
    "correction": "relu",
    "learning_rate": "0.001",
    "beta1": "0.9",
    "beta2": "0.999",
    "adam_eps": "1e-08",
    "lam": "0",
    "regularizer": "l2",
    "batch_size_nu": "100",
    "batch_size_de": "100",
    "epochs": "100",
    "seed": "0",
    "shuffle": "true",
    "wrap": "true",
    "holdout_de": "",
    "holdout_x": "",
    "holdout_y": "",
    "problem": "",
    "n_mc": "100000",
}

COVSHIFT_DEFAULTS = {
    "kind": "mixture",
    "dim": "2",
    "pi": "0.5",
    "shift": "2",
    "target": "quad",
    "noise": "0.1",
    "n_train": "500",
    "n_test": "500",
    "methods": "uniform,true_ratio,nnbr_lsif",
    "kernels": "linear",
    "degree": "2",
    "seeds": "10",
    "C": "",
    "hidden": "32,32",
    "epochs": "200",
    "batch_size": "50",
    "learning_rate": "0.001",
    "n_basis": "100",
}

BENCH_DEFAULTS = {
    "n_nu": "200",
    "n_de": "200",
    "n_hold": "1000",
    "n_labeled": "1000",
    "hidden": "32,32",
    "link": "softplus",
    "epochs": "2000",
    "batch_size": "5",
    "learning_rate": "0.001",
    "lam": "0",
    "n_basis": "100",
}


def resolve(defaults, path=None, overrides=()):
    """Defaults, then the config file, then ``--set key=value`` flags.
    Unknown keys are an error."""
    cfg = dict(defaults)
    layers = []
    if path:
        layers.append((dataio.read_config(path), str(path)))
    sets = {}
    for item in overrides:
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"--set expects key=value, got {item!r}")
        sets[key.strip()] = value.strip()
    layers.append((sets, "--set"))
    for layer, source in layers:
        for key, value in layer.items():
            if key not in defaults:
                raise UsageError(f"{source}: unknown key {key!r}")
            cfg[key] = value
    return cfg


def _seeds(text):
    """``k`` means seeds 0..k-1; a comma list is taken literally."""
    if "," in text:
        return _ints(text)
    k = _int(text)
    if k < 1:
        raise UsageError("seeds must be >= 1")
    return tuple(range(k))


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)


# commands -----------------------------------------------------------------------

def build_train(cfg, d):
    """Turn a resolved train config into ``(spec, config, model)``."""
    spec = LossSpec(cfg["family"], _float(cfg["C"]), pu_epsilon=_float(cfg["pu_epsilon"]))
    config = TrainConfig(
        learning_rate=_float(cfg["learning_rate"]), beta1=_float(cfg["beta1"]),
        beta2=_float(cfg["beta2"]), adam_eps=_float(cfg["adam_eps"]), lam=_float(cfg["lam"]),
        regularizer=cfg["regularizer"], batch_size_nu=_int(cfg["batch_size_nu"]),
        batch_size_de=_int(cfg["batch_size_de"]), epochs=_int(cfg["epochs"]),
        seed=_int(cfg["seed"]), shuffle=_bool(cfg["shuffle"]), wrap=_bool(cfg["wrap"]),
        correction=correction_from_name(cfg["correction"]),
    )
    default_link = "sigmoid_clamped" if spec.family.value == "PULog" else "softplus"
    arch = cfg["arch"] or f"mlp:{d},32,32,1:{default_link}"
    widths, link = parse_arch(arch)
    if widths[0] != d:
        raise UsageError(f"architecture input width {widths[0]} does not match data dimension {d}")
    model = MlpRatioModel.init(widths, link, seed=config.seed, epsilon=spec.pu_epsilon)
    return spec, config, model


def cmd_train(args):
    cfg = resolve(TRAIN_DEFAULTS, args.config, args.set)
    X_nu, X_de = dataio.read_samples(args.nu), dataio.read_samples(args.de)
    if X_nu.shape[1] != X_de.shape[1]:
        raise UsageError(f"dimension mismatch: nu has d={X_nu.shape[1]}, de has d={X_de.shape[1]}")
    d = X_nu.shape[1]
    spec, config, model = build_train(cfg, d)
    if not config.wrap and (config.batch_size_nu > X_nu.shape[0]
                            or config.batch_size_de > X_de.shape[0]):
        raise UsageError("batch size exceeds sample size with wrap = false")
    hold = Holdout()
    if cfg["holdout_de"]:
        hold.de = dataio.read_samples(cfg["holdout_de"])
    if bool(cfg["holdout_x"]) != bool(cfg["holdout_y"]):
        raise UsageError("holdout_x and holdout_y go together")
    if cfg["holdout_x"]:
        hold.X_labeled = dataio.read_samples(cfg["holdout_x"])
        hold.y_labeled = dataio.read_labels(cfg["holdout_y"])
        if hold.y_labeled.size != hold.X_labeled.shape[0]:
            raise UsageError("holdout_x and holdout_y differ in length")
        if np.unique(hold.y_labeled).size < 2:
            raise UsageError("holdout_y needs both labels")
    problem = parse_problem(cfg["problem"]) if cfg["problem"] else None
    n_mc = _int(cfg["n_mc"])
    for name, X in (("holdout_de", hold.de), ("holdout_x", hold.X_labeled)):
        if X is not None and X.shape[1] != d:
            raise UsageError(f"{name} has d={X.shape[1]}, expected {d}")
    if problem is not None and problem.dim != d:
        raise UsageError(f"problem has d={problem.dim}, data has d={d}")

    model, trace = train(model, spec, X_nu, X_de, config, hold)
    full = risk_from_values(spec, model.forward_batch(X_nu), model.forward_batch(X_de),
                            config.correction)
    e_de = hold.de if hold.de is not None else X_de
    metrics = {
        "final_risk": full.total,
        "e_de_r": evalkit.normalization_diag(model, e_de),
        "auroc": float(trace.auroc[-1]) if hold.X_labeled is not None else None,
        "l2_error": None,
        "l2_se": None,
    }
    if problem is not None:
        metrics["l2_error"], metrics["l2_se"] = evalkit.l2_error(model, problem, n_mc, seed=HOLD_SEED)
    _ensure_dir(args.out)
    _write_text(os.path.join(args.out, "model.json"), dataio.dumps_json(model.to_dict()))
    write_trace_csv(trace, os.path.join(args.out, "trace.csv"))
    _write_text(os.path.join(args.out, "config.resolved"), dataio.dumps_config(cfg))
    _write_text(os.path.join(args.out, "metrics.json"), dataio.dumps_json(metrics))
    return EXIT_OK


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_score(args):
    try:
        model = load_model(args.model)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot load model {args.model}: {exc}") from exc
    X = dataio.read_samples(args.data)
    spec = None
    if args.loss:
        family, _, c = args.loss.partition(":")
        spec = LossSpec(family, _float(c) if c else 1.0)
    if model.input_dim is not None and X.shape[1] != model.input_dim:
        raise UsageError(f"model expects d={model.input_dim}, data has d={X.shape[1]}")
    scores = apps.outlier_scores(model, spec, X)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    _ensure_dir(out_dir)
    dataio.write_column(args.out, scores)
    return EXIT_OK


def _bench_settings(cfg):
    return experiments.BenchSettings(
        n_nu=_int(cfg["n_nu"]), n_de=_int(cfg["n_de"]), n_hold=_int(cfg["n_hold"]),
        n_labeled=_int(cfg["n_labeled"]), hidden=_ints(cfg["hidden"]), link=cfg["link"],
        epochs=_int(cfg["epochs"]), batch_size=_int(cfg["batch_size"]),
        learning_rate=_float(cfg["learning_rate"]), lam=_float(cfg["lam"]),
        n_basis=_int(cfg["n_basis"]))


def _trace_name(label, seed):
    return label.replace(":", "_C") + f"_seed{seed}.csv"


def cmd_synth_bench(args):
    cfg = resolve(BENCH_DEFAULTS, args.config, args.set)
    problem = parse_problem(args.problem)
    methods = [experiments.MethodSpec.parse(t) for t in args.methods.split(",") if t.strip()]
    if not methods:
        raise UsageError("no methods given")
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    settings = _bench_settings(cfg)
    if settings.link not in LINKS:
        raise UsageError(f"unknown link {settings.link!r}")
    holdout = experiments.holdout_for(problem, settings)
    _ensure_dir(os.path.join(args.out, "traces"))
    results = []
    for m in methods:
        for seed in range(args.seeds):
            r = experiments.run_method(problem, m, seed, settings, holdout)
            results.append(r)
            if r.trace is not None:
                write_trace_csv(r.trace, os.path.join(args.out, "traces", _trace_name(m.label, seed)))
    fmt = dataio.fmt
    with open(os.path.join(args.out, "runs.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(experiments.RUNS_HEADER)
        for r in results:
            w.writerow([r.method, fmt(r.C), r.seed, fmt(r.auroc), fmt(r.l2_error), fmt(r.l2_se),
                        fmt(r.e_de_r), fmt(r.final_risk)])
    with open(os.path.join(args.out, "summary.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(experiments.SUMMARY_HEADER)
        for row in experiments.summarize(results):
            w.writerow([row[0], fmt(row[1]), row[2]] + [fmt(v) for v in row[3:]])
    resolved = dict(cfg, problem=args.problem, methods=args.methods, seeds=str(args.seeds))
    _write_text(os.path.join(args.out, "config.resolved"), dataio.dumps_config(resolved))
    return EXIT_OK


def cmd_covshift(args):
    cfg = resolve(COVSHIFT_DEFAULTS, args.config, args.set)
    problem = apps.CovShiftProblem(
        kind=cfg["kind"], dim=_int(cfg["dim"]), pi=_float(cfg["pi"]), shift=_float(cfg["shift"]),
        target=cfg["target"], noise=_float(cfg["noise"]), n_train=_int(cfg["n_train"]),
        n_test=_int(cfg["n_test"]))
    methods = [t.strip() for t in cfg["methods"].split(",") if t.strip()]
    for m in methods:
        if m not in apps.METHODS:
            raise UsageError(f"unknown method {m!r}; expected one of {', '.join(apps.METHODS)}")
    kernel_names = [t.strip() for t in cfg["kernels"].split(",") if t.strip()]
    for k in kernel_names:
        if k not in apps.KERNELS:
            raise UsageError(f"unknown ridge kernel {k!r}")
    if not methods or not kernel_names:
        raise UsageError("methods and kernels must not be empty")
    seeds = _seeds(cfg["seeds"])
    opts = apps.MethodOptions(
        C=_float(cfg["C"]) if cfg["C"] else None, hidden=_ints(cfg["hidden"]),
        epochs=_int(cfg["epochs"]), batch_size=_int(cfg["batch_size"]),
        learning_rate=_float(cfg["learning_rate"]), n_basis=_int(cfg["n_basis"]))
    degree = _int(cfg["degree"])
    if (("nnbr_" in cfg["methods"] or "_nn" in cfg["methods"]) and opts.C is None
            and not np.isfinite(problem.sup_ratio())):
        raise UsageError("this shift has an unbounded ratio; set C explicitly")
    rows = [apps.covshift_experiment(problem, m, k, seeds, opts, degree)
            for k in kernel_names for m in methods]
    _ensure_dir(args.out)
    fmt = dataio.fmt
    with open(os.path.join(args.out, "results.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(apps.RESULT_HEADER)
        for r in rows:
            w.writerow([r.method, r.kernel, fmt(r.mean_pd), fmt(r.sd_pd), fmt(r.mean_mse),
                        fmt(r.sd_mse), ";".join(str(s) for s in r.seeds)])
    _write_text(os.path.join(args.out, "config.resolved"), dataio.dumps_config(cfg))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="nnbr", description="Non-negative Bregman density-ratio estimation")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a ratio model on two sample files")
    t.add_argument("--nu", required=True)
    t.add_argument("--de", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("score", help="score rows with a saved model")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--loss", help="FAMILY:C of the training loss (PULog scores are divided by C)")
    s.set_defaults(func=cmd_score)

    b = sub.add_parser("synth-bench", help="seeded benchmark on a synthetic problem")
    b.add_argument("--problem", required=True)
    b.add_argument("--methods", required=True)
    b.add_argument("--seeds", type=int, default=10)
    b.add_argument("--config")
    b.add_argument("--out", required=True)
    b.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    b.set_defaults(func=cmd_synth_bench)

    c = sub.add_parser("covshift", help="importance-weighted ridge under covariate shift")
    c.add_argument("--config")
    c.add_argument("--out", required=True)
    c.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    c.set_defaults(func=cmd_covshift)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NumericalError, SingularMatrixError) as exc:
        print(f"nnbr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NNBRError, ValueError) as exc:
        print(f"nnbr: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
