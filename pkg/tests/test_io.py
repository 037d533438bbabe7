import json

import numpy as np
import pytest

from sled import (
    DataMatrix,
    MatrixFile,
    NonNumericCell,
    ParseError,
    RaggedRows,
    ResultDocument,
    align_by_name,
    read_matrix,
    read_result,
    write_matrix,
    write_result,
)
from sled.matrix_io import render_result


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


# ---------------------------------------------------------------- reading

def test_read_csv_with_header(tmp_path):
    path = _write(tmp_path, "m.csv", "a,b\n1,2\n3,4\n")
    dm = read_matrix(MatrixFile(path))
    assert dm.n == 2 and dm.p == 2
    assert dm.feature_names == ("a", "b")
    assert np.array_equal(dm.values, [[1.0, 2.0], [3.0, 4.0]])


def test_read_orientation_features_transposes(tmp_path):
    path = _write(tmp_path, "m.csv", "a,b\n1,2\n3,4\n")
    dm = read_matrix(MatrixFile(path, orientation="features"))
    assert np.array_equal(dm.values, [[1.0, 3.0], [2.0, 4.0]])
    assert dm.feature_names == ("a", "b")


def test_read_tsv_without_header(tmp_path):
    path = _write(tmp_path, "m.tsv", "1\t2.5\n-3\t4e-2\n")
    dm = read_matrix(MatrixFile(path, fmt="tsv", has_header=False))
    assert dm.feature_names is None
    assert np.array_equal(dm.values, [[1.0, 2.5], [-3.0, 0.04]])


def test_read_nan_cell_is_rejected_with_location(tmp_path):
    path = _write(tmp_path, "m.csv", "a,b\n1,NaN\n3,4\n")
    with pytest.raises(NonNumericCell) as err:
        read_matrix(MatrixFile(path))
    assert err.value.row == 2 and err.value.col == 2
    assert "NaN" in str(err.value)


def test_read_infinite_cell_is_rejected(tmp_path):
    path = _write(tmp_path, "m.csv", "1,inf\n3,4\n")
    with pytest.raises(NonNumericCell):
        read_matrix(MatrixFile(path, has_header=False))


def test_read_text_cell_is_rejected(tmp_path):
    path = _write(tmp_path, "m.csv", "1,2\n3,four\n")
    with pytest.raises(NonNumericCell) as err:
        read_matrix(MatrixFile(path, has_header=False))
    assert err.value.row == 2 and err.value.col == 2


def test_read_ragged_rows(tmp_path):
    path = _write(tmp_path, "m.csv", "1,2\n3,4,5\n")
    with pytest.raises(RaggedRows) as err:
        read_matrix(MatrixFile(path, has_header=False))
    assert err.value.row == 2


def test_read_header_width_mismatch(tmp_path):
    path = _write(tmp_path, "m.csv", "a,b,c\n1,2\n")
    with pytest.raises(RaggedRows):
        read_matrix(MatrixFile(path))


def test_read_empty_file(tmp_path):
    path = _write(tmp_path, "m.csv", "")
    with pytest.raises(ParseError):
        read_matrix(MatrixFile(path))


def test_read_missing_file(tmp_path):
    with pytest.raises(ParseError) as err:
        read_matrix(MatrixFile(str(tmp_path / "absent.csv")))
    assert "absent.csv" in str(err.value)


# ---------------------------------------------------------------- writing

def test_matrix_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    dm = DataMatrix(rng.normal(size=(7, 4)) * 1e-7, feature_names=("w", "x", "y", "z"))
    path = tmp_path / "echo.csv"
    write_matrix(dm, path)
    back = read_matrix(MatrixFile(str(path)))
    assert np.array_equal(back.values, dm.values)
    assert back.feature_names == dm.feature_names


def test_matrix_write_is_deterministic(tmp_path):
    dm = DataMatrix(np.array([[1 / 3, 2 / 7], [0.1, -5.0]]))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_matrix(dm, a)
    write_matrix(dm, b)
    assert a.read_bytes() == b.read_bytes()


# ---------------------------------------------------------------- align by name

def test_align_by_name_orders_by_first_input():
    x = DataMatrix(np.arange(6.0).reshape(2, 3), feature_names=("a", "b", "c"))
    y = DataMatrix(np.arange(8.0).reshape(2, 4), feature_names=("c", "d", "a", "b"))
    x2, y2 = align_by_name(x, y)
    assert x2.feature_names == ("a", "b", "c")
    assert y2.feature_names == ("a", "b", "c")
    assert np.array_equal(y2.values[:, 0], y.values[:, 2])


def test_align_by_name_requires_headers():
    x = DataMatrix(np.ones((2, 2)))
    y = DataMatrix(np.ones((2, 2)), feature_names=("a", "b"))
    with pytest.raises(ParseError):
        align_by_name(x, y)


def test_align_by_name_requires_overlap():
    x = DataMatrix(np.ones((2, 2)), feature_names=("a", "b"))
    y = DataMatrix(np.ones((2, 2)), feature_names=("c", "d"))
    with pytest.raises(ParseError):
        align_by_name(x, y)


# ---------------------------------------------------------------- result documents

def _document(null_stats=None):
    return ResultDocument(
        tool_version="sled test",
        config={"method": "sled", "c": 0.1, "seed": 7},
        statistic=1.23456789,
        p_value=0.014,
        negated=True,
        n_permutations=1000,
        seed=7,
        n_nonconverged=2,
        leverage=[0.5, 0.25, 0.25],
        primary_features=["g1"],
        secondary_features=["g2", "g0"],
        null_stats=null_stats,
        threads=2,
        wall_seconds=1.5,
    )


def test_result_round_trip_is_byte_identical(tmp_path):
    doc = _document(null_stats=[0.1, 0.2, 1 / 3])
    path = tmp_path / "result.json"
    write_result(doc, path)
    first = path.read_bytes()
    back = read_result(path)
    write_result(back, path)
    assert path.read_bytes() == first
    assert back == doc


def test_result_null_stats_omitted_by_default():
    doc = _document(null_stats=None)
    payload = json.loads(render_result(doc))
    assert payload["result"]["null_stats"] is None
    assert payload["result"]["p_value"] == 0.014
    assert payload["schema_version"] == 1


def test_result_fixed_key_order():
    doc = _document()
    payload = json.loads(render_result(doc))
    assert list(payload) == ["schema_version", "tool_version", "config",
                             "result", "ranked_features", "execution"]


def test_result_two_writes_identical(tmp_path):
    doc = _document(null_stats=[2.0] * 1000)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_result(doc, a)
    write_result(doc, b)
    assert a.read_bytes() == b.read_bytes()


def test_result_execution_block_absent_when_unset():
    doc = _document()
    doc.threads = None
    doc.wall_seconds = None
    payload = json.loads(render_result(doc))
    assert "execution" not in payload
