import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bridgelab.emit import emit_series, format_cell, read_meta, read_series, write_svg

CFG = {"experiment": "oracle", "seed": 1}


@pytest.mark.parametrize("n_rows", [0, 1, 10_000])
def test_roundtrip(tmp_path, n_rows):
    rng = np.random.default_rng(n_rows)
    rows = [[int(i), float(x), float(y)] for i, (x, y) in enumerate(rng.standard_normal((n_rows, 2)) * 1e3)]
    p = emit_series("s", ["i", "x", "y"], rows, tmp_path, CFG, 0.5)
    header, back = read_series(p)
    assert header == ["i", "x", "y"]
    assert back == rows
    meta = read_meta(p)
    assert meta["config"] == CFG and meta["wall_time_s"] == 0.5 and meta["git_describe"]


def test_csv_text_format(tmp_path):
    p = emit_series("t", ["a", "b"], [[0.1, True]], tmp_path, CFG)
    text = p.read_bytes().decode("utf-8")
    assert text == "a,b\n0.10000000000000001,true\n"


def test_rejects_ragged_rows(tmp_path):
    with pytest.raises(ValueError):
        emit_series("r", ["a", "b"], [[1.0]], tmp_path)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_17_digits_roundtrip(x):
    assert float(format_cell(x)) == x


def test_svg_has_config_echo(tmp_path):
    p = write_svg(tmp_path / "p.svg", [0, 0.5, 1], {"a": [0, 1, 0]}, [0, 1], [0, 1], config=CFG)
    text = p.read_text()
    assert text.startswith("<svg") and "<polyline" in text
    assert json.dumps(CFG, sort_keys=True).replace('"', "&quot;") in text or '"experiment"' in text
