import json
import math

import pytest

from pennation import report


@pytest.mark.parametrize("value, text", [
    (None, ""),
    (True, "1"),
    (False, "0"),
    (1.0, "1.000000"),
    (1 / 3, "0.333333"),
    (-1e-9, "0.000000"),
    (math.nan, "nan"),
    (7, "7"),
    ("entire", "entire"),
])
def test_fmt(value, text):
    assert report.fmt(value) == text


def test_csv_roundtrip(tmp_path):
    path = tmp_path / "p.csv"
    report.write_csv(path, report.PENNATION_COLUMNS, [
        {"frame": 0, "fitted_angle_deg": 25.5, "n_points": 3, "quality_warning": False},
        {"frame": 1, "fitted_angle_deg": None, "n_points": 0, "quality_warning": True},
    ])
    assert path.read_text().splitlines()[1] == "0,25.500000,3,0"
    assert report.read_pennation_csv(path) == {0: 25.5, 1: None}


def test_json_is_canonical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    report.write_json(a, {"z": 0.1 + 0.2, "a": [math.inf, 1]})
    report.write_json(b, {"a": [math.inf, 1], "z": 0.3})
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text()) == {"a": [None, 1], "z": 0.3}


def test_svg_structure():
    svg = report.trajectory_svg({"one": {0: 20.0, 1: 21.0}, "two": {0: 22.0, 1: None, 2: 23.0}},
                                band={0: (19.0, 20.0, 21.0), 1: (20.0, 21.0, 22.0)})
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert svg.count('<path class="estimate"') == 2
    assert 'data-label="two"' in svg
    assert svg.count("<polygon") == 1 and 'stroke-dasharray' in svg


def test_svg_empty():
    with pytest.raises(ValueError):
        report.trajectory_svg({})
