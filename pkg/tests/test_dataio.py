import json
import math

import numpy as np
import pytest

from nnbr import dataio
from nnbr.errors import ConfigError, LabelError, ShapeError


def test_fmt_roundtrip():
    for x in (0.1, 1 / 3, -2.5e-300, 123456789.123456789, math.pi, 0.0):
        assert float(dataio.fmt(x)) == x
    assert dataio.fmt(float("nan")) == "nan"


def test_dumps_json():
    text = dataio.dumps_json({"b": [1.0, 0.1], "a": {"z": float("inf"), "y": None}, "c": 3})
    doc = json.loads(text)
    assert list(doc) == ["a", "b", "c"]
    assert doc["a"]["z"] is None and doc["b"] == [1.0, 0.1]
    assert text.endswith("\n")
    assert dataio.dumps_json({"x": 1 / 3}) == dataio.dumps_json({"x": 1 / 3})


def test_samples_roundtrip(tmp_path):
    X = np.random.default_rng(0).standard_normal((7, 3))
    for header in (True, False):
        path = tmp_path / f"s{header}.csv"
        dataio.write_samples(path, X, header=header)
        assert np.array_equal(dataio.read_samples(path), X)


@pytest.mark.parametrize("text,err", [
    ("x1,x2\n1,2\n3\n", ShapeError),
    ("x1,y\n1,2\n", ShapeError),
    ("x1\n", ShapeError),
    ("1\nabc\n", ShapeError),
    ("1\ninf\n", ShapeError),
])
def test_bad_samples(tmp_path, text, err):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(err):
        dataio.read_samples(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        dataio.read_samples(tmp_path / "nope.csv")


def test_labels(tmp_path):
    path = tmp_path / "y.csv"
    path.write_text("y\n1\n-1\n1\n")
    assert dataio.read_labels(path).tolist() == [1, -1, 1]
    path.write_text("1\n0\n")
    with pytest.raises(LabelError):
        dataio.read_labels(path)


def test_config_parse_and_dump():
    cfg = dataio.parse_config("# header\nb = 2  # trailing\na=x\n\n")
    assert cfg == {"a": "x", "b": "2"}
    assert dataio.dumps_config(cfg) == "a = x\nb = 2\n"
    assert dataio.parse_config(dataio.dumps_config(cfg)) == cfg
    for bad in ("a = 1\na = 2\n", "just words\n", " = 3\n"):
        with pytest.raises(ConfigError):
            dataio.parse_config(bad)


def test_write_column(tmp_path):
    path = tmp_path / "c.txt"
    dataio.write_column(path, [0.5, 1 / 3])
    assert [float(v) for v in path.read_text().split()] == [0.5, 1 / 3]
