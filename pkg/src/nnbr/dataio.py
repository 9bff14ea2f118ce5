"""Text formats: sample CSV, label files, flat ``key = value`` configs and
JSON with round-trip-exact floats."""
import csv
import math

import numpy as np

from .errors import ConfigError, LabelError, ShapeError


def fmt(x) -> str:
    """17 significant digits, which round-trips any double; ``nan`` for NaN."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _json_value(v, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return "null"
        return fmt(v)
    if isinstance(v, str):
        import json
        return json.dumps(v)
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f'{pad}{_json_value(str(k), indent, level + 1)}: {_json_value(v[k], indent, level + 1)}'
                 for k in sorted(v)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        if all(not isinstance(e, (dict, list, tuple, np.ndarray)) for e in v):
            return "[" + ", ".join(_json_value(e, indent, level + 1) for e in v) + "]"
        items = [pad + _json_value(e, indent, level + 1) for e in v]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def dumps_json(obj, indent=2) -> str:
    """Sorted keys, floats at 17 significant digits, non-finite floats as null."""
    return _json_value(obj, indent, 0) + "\n"


# samples -------------------------------------------------------------------

def read_samples(path) -> np.ndarray:
    """One row per sample, ``d`` numeric columns, optional ``x1,...,xd`` header."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    if rows and rows[0] and rows[0][0].strip().lower().startswith("x"):
        header = [c.strip().lower() for c in rows[0]]
        if header != [f"x{j + 1}" for j in range(len(header))]:
            raise ShapeError(f"{path}: header must be x1,...,xd")
        rows = rows[1:]
    if not rows:
        raise ShapeError(f"{path}: no samples")
    d = len(rows[0])
    out = np.empty((len(rows), d))
    for i, row in enumerate(rows):
        if len(row) != d:
            raise ShapeError(f"{path}, row {i + 1}: expected {d} columns, got {len(row)}")
        try:
            out[i] = [float(c) for c in row]
        except ValueError as exc:
            raise ShapeError(f"{path}, row {i + 1}: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise ShapeError(f"{path}: non-finite values")
    return out


def write_samples(path, X, header=True):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"x{j + 1}" for j in range(X.shape[1])])
        for row in X:
            w.writerow([fmt(v) for v in row])


def read_labels(path) -> np.ndarray:
    """Single column of 1 / -1."""
    try:
        with open(path, encoding="utf-8") as fh:
            tokens = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    if tokens and tokens[0].lower() in ("y", "label"):
        tokens = tokens[1:]
    try:
        y = np.array([int(float(t)) for t in tokens])
    except ValueError as exc:
        raise LabelError(f"{path}: {exc}") from exc
    if y.size == 0 or not np.all(np.isin(y, (1, -1))):
        raise LabelError(f"{path}: labels must be 1 or -1")
    return y


def write_column(path, values):
    with open(path, "w", encoding="utf-8") as fh:
        for v in np.asarray(values, dtype=np.float64).ravel():
            fh.write(fmt(v) + "\n")


# configs ---------------------------------------------------------------------

def parse_config(text, source="<config>") -> dict:
    """``key = value`` per line, ``#`` starts a comment. Keys may not repeat."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path} is not UTF-8") from exc
    return parse_config(text, str(path))


def dumps_config(cfg: dict) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))
