import json

import numpy as np
import pandas as pd
import pytest

from ohsize.errors import InputFormatError
from ohsize.types.cost import CostParameters
from ohsize.utils.io import (
    parse_model,
    read_curve_csv,
    read_curve_table,
    read_json,
    read_observations_csv,
    sha256_file,
    write_frame,
    write_json,
)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_read_observations(tmp_path):
    path = _write(tmp_path, "obs.csv", "n,value,variance\n100,0.5,0.01\n200, 0.4, 0.02\n")
    obs = read_observations_csv(path, N=1_000)
    assert obs.sizes == [100, 200]
    assert obs.values == pytest.approx([0.5, 0.4])
    assert obs.N == 1_000


def test_wrong_header_reports_first_line(tmp_path):
    path = _write(tmp_path, "obs.csv", "size,value,variance\n100,0.5,0.01\n")
    with pytest.raises(InputFormatError) as info:
        read_observations_csv(path)
    assert info.value.line == 1


def test_bad_value_reports_its_line(tmp_path):
    path = _write(tmp_path, "obs.csv", "n,value,variance\n100,0.5,0.01\n200,abc,0.02\n")
    with pytest.raises(InputFormatError) as info:
        read_observations_csv(path)
    assert info.value.line == 3


@pytest.mark.parametrize(
    "row, line",
    [("1.5,0.3,0.01", 3), ("0,0.3,0.01", 3), ("300,0.3,0", 3), ("5000,0.3,0.01", 3)],
)
def test_invalid_rows(tmp_path, row, line):
    path = _write(tmp_path, "obs.csv", f"n,value,variance\n100,0.5,0.01\n{row}\n")
    with pytest.raises(InputFormatError) as info:
        read_observations_csv(path, N=1_000)
    assert info.value.line == line


def test_missing_file(tmp_path):
    with pytest.raises(InputFormatError):
        read_observations_csv(tmp_path / "absent.csv")


def test_curve_table_must_ascend(tmp_path):
    path = _write(tmp_path, "curve.csv", "n,k2\n10,0.5\n30,0.4\n20,0.3\n")
    with pytest.raises(InputFormatError) as info:
        read_curve_table(path)
    assert info.value.line == 4


def test_curve_csv_interpolates(tmp_path):
    path = _write(tmp_path, "curve.csv", "n,k2\n10,0.5\n30,0.3\n")
    curve = read_curve_csv(path)
    assert curve.kind == "tabulated"
    assert float(curve(np.array([20.0]))[0]) == pytest.approx(0.4)


def test_json_decode_error_line(tmp_path):
    path = _write(tmp_path, "params.json", '{\n  "N": 100,\n  "k1": \n}\n')
    with pytest.raises(InputFormatError) as info:
        read_json(path)
    assert info.value.line == 4


def test_json_must_be_object(tmp_path):
    with pytest.raises(InputFormatError):
        read_json(_write(tmp_path, "list.json", "[1, 2]"))


def test_parse_model_maps_schema_errors(tmp_path):
    path = tmp_path / "params.json"
    with pytest.raises(InputFormatError):
        parse_model({"N": 100, "k1": 0.4}, CostParameters.from_json_dict, path)
    with pytest.raises(InputFormatError):
        parse_model({"N": 100, "k1": -1, "a": 1, "b": 1, "c": 0}, CostParameters.from_json_dict, path)
    params = parse_model({"N": 100, "k1": 0.4, "a": 1, "b": 1, "c": 0}, CostParameters.from_json_dict, path)
    assert params.N == 100


def test_writers_are_stable(tmp_path):
    first = write_json(tmp_path / "a.json", {"b": 1, "a": [1.5]})
    assert list(json.loads(first.read_text()).keys()) == ["a", "b"]
    frame = pd.DataFrame({"n": [1, 2], "cost": [0.5, 0.25]})
    one = write_frame(tmp_path / "one.csv", frame)
    two = write_frame(tmp_path / "two.csv", frame)
    assert one.read_text() == "n,cost\n1,0.5\n2,0.25\n"
    assert sha256_file(one) == sha256_file(two)
