import json

import numpy as np
import pytest

from focalgmm import ValidationError
from focalgmm.io import (dumps, fmt, layout_from_spec, read_json, read_network_csv,
                         read_panel_csv, spec_from_layout, write_network_csv, write_panel_csv)
from focalgmm.model import (NetworkSpec, PanelData, build_lagged_transform,
                            build_spatial_transform, build_spillover_transform,
                            single_equation_transform)


def test_fmt_round_trips_floats():
    rng = np.random.default_rng(0)
    for v in rng.normal(size=200) * 10.0 ** rng.integers(-300, 300, size=200):
        assert float(fmt(v)) == v
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(3) == "3" and fmt(True) == "1"
    assert fmt(np.nan) == "NaN" and fmt(-np.inf) == "-Infinity"


def test_dumps_is_valid_json():
    obj = {"a": np.array([0.1, 2.0]), "b": [[1, 2], [3, 4]], "c": None, "d": "x", "e": {}}
    back = json.loads(dumps(obj))
    assert back["a"] == [0.1, 2.0]
    assert back["b"] == [[1, 2], [3, 4]]
    assert dumps(obj) == dumps(obj)
    with pytest.raises(TypeError):
        dumps({"f": object()})


def _panel(rng, n=7, ragged=True):
    p = 3
    y = rng.normal(size=(n, p))
    x = [rng.normal(size=(n, 2 + (j if ragged else 0))) for j in range(p)]
    z = [rng.normal(size=(n, 3)) for _ in range(p)]
    return PanelData(y, x, z, ["a", "b", "c"])


def test_panel_round_trip(tmp_path):
    data = _panel(np.random.default_rng(1))
    back = read_panel_csv(write_panel_csv(data, tmp_path / "p.csv"))
    assert back.labels == ["a", "b", "c"]
    assert back.y.tobytes() == data.y.tobytes()
    for j in range(3):
        assert back.x[j].tobytes() == data.x[j].tobytes()
        assert back.z[j].tobytes() == data.z[j].tobytes()


def test_panel_errors_carry_line_numbers(tmp_path):
    good = write_panel_csv(_panel(np.random.default_rng(2), n=3, ragged=False), tmp_path / "g.csv")
    lines = good.read_text().splitlines()
    bad = lines.copy()
    bad[4] = bad[4].replace(bad[4].split(",")[2], "oops", 1)
    (tmp_path / "b.csv").write_text("\n".join(bad) + "\n")
    with pytest.raises(ValidationError, match="line 5"):
        read_panel_csv(tmp_path / "b.csv")
    dup = lines + [lines[1]]
    (tmp_path / "d.csv").write_text("\n".join(dup) + "\n")
    with pytest.raises(ValidationError, match="duplicate"):
        read_panel_csv(tmp_path / "d.csv")
    (tmp_path / "u.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValidationError, match="unbalanced"):
        read_panel_csv(tmp_path / "u.csv")
    (tmp_path / "h.csv").write_text("time,unit,y\n")
    with pytest.raises(ValidationError, match="line 1"):
        read_panel_csv(tmp_path / "h.csv")
    with pytest.raises(ValidationError, match="not found"):
        read_panel_csv(tmp_path / "missing.csv")


def test_network_round_trip_and_errors(tmp_path):
    W = np.random.default_rng(3).random((4, 4))
    assert read_network_csv(write_network_csv(W, tmp_path / "w.csv")).tobytes() == W.tobytes()
    (tmp_path / "r.csv").write_text("1,2\n3\n")
    with pytest.raises(ValidationError, match="line 2"):
        read_network_csv(tmp_path / "r.csv")
    (tmp_path / "e.csv").write_text("\n")
    with pytest.raises(ValidationError, match="empty"):
        read_network_csv(tmp_path / "e.csv")


def _specs():
    W = np.array([[0, 1, 0], [0.5, 0, 0.5], [1, 0, 0]], float)
    net = NetworkSpec(W, (0, 1))
    lag = NetworkSpec(W + np.eye(3), zero_diag=False)
    return [
        (single_equation_transform(np.array([1.0, 0.0, 2.0]), 0, 1), np.array([[1.0, 0.0, 2.0]])),
        (build_spillover_transform(net, n_exog=2), W),
        (build_spatial_transform(net, 1, exclude_self=True), W),
        (build_lagged_transform(lag), W + np.eye(3)),
    ]


@pytest.mark.parametrize("case", range(4))
def test_layout_round_trip(case, tmp_path):
    spec, W = _specs()[case]
    layout = json.loads(dumps(layout_from_spec(spec)))
    back = spec_from_layout(layout, W)
    assert back.names == spec.names
    np.testing.assert_array_equal(back.theta1, spec.theta1)
    for a, b in zip(back.blocks, spec.blocks):
        np.testing.assert_array_equal(a, b)


def test_layout_partition_by_name_and_errors():
    spec, W = _specs()[1]
    layout = layout_from_spec(spec)
    layout["theta1"] = [spec.names[0], 2]
    np.testing.assert_array_equal(spec_from_layout(layout, W).theta1, [0, 2])
    layout["theta1"] = ["nope"]
    with pytest.raises(ValidationError, match="unknown"):
        spec_from_layout(layout, W)
    with pytest.raises(ValidationError, match="names"):
        spec_from_layout(layout_from_spec(spec), np.ones((4, 4)) - np.eye(4))
    with pytest.raises(ValidationError):
        spec_from_layout({"model": "var"}, W)


def test_read_json_errors(tmp_path):
    (tmp_path / "a.json").write_text("{\n  \"a\": 1,\n}")
    with pytest.raises(ValidationError, match="line 3"):
        read_json(tmp_path / "a.json")
    with pytest.raises(ValidationError, match="not found"):
        read_json(tmp_path / "b.json")
