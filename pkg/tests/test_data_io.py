import csv
import json
import math

import numpy as np
import pytest

from kanchor.data import (
    ColumnSchema,
    Dataset,
    emit_report,
    load_csv,
    read_report_csv,
    split_by_group,
    subsample,
)
from kanchor.evaluation import TrialReport, summarize
from kanchor.exceptions import EmptyDatasetError, InvalidInputError, MissingColumnError
from kanchor.sem import generate

SCHEMA = ColumnSchema(treatment="amt", outcome="exp", anchors="age", log=("amt", "exp"))


def _write(tmp_path, text, name="in.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_three_row_mapping(tmp_path):
    path = _write(tmp_path, "amt,exp,age\n2,10,30\n5,20,40\n7.5,30,50\n")
    d = load_csv(path, SCHEMA)
    assert d.n == 3
    np.testing.assert_allclose(d.x[:, 0], np.log([2, 5, 7.5]))
    np.testing.assert_allclose(d.y, np.log([10, 20, 30]))
    np.testing.assert_allclose(d.z[:, 0], [30, 40, 50])
    assert d.meta == {"rows": 3, "dropped_missing": 0, "dropped_log": 0}


def test_missing_column(tmp_path):
    path = _write(tmp_path, "amt,exp,age\n1,2,3\n")
    with pytest.raises(MissingColumnError, match="foo"):
        load_csv(path, ColumnSchema("amt", "exp", "foo"))


def test_na_outcome_dropped(tmp_path):
    path = _write(tmp_path, "amt,exp,age\n2,10,30\n5,NA,40\n7.5,30,50\n")
    d = load_csv(path, SCHEMA)
    assert d.n == 2 and d.meta["dropped_missing"] == 1


def test_nonpositive_under_log_dropped(tmp_path):
    path = _write(tmp_path, "amt,exp,age\n0,10,30\n-1,20,40\n7.5,30,50\n")
    d = load_csv(path, SCHEMA)
    assert d.n == 1 and d.meta["dropped_log"] == 2


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_csv("/nonexistent/file.csv", SCHEMA)


def test_no_rows_left(tmp_path):
    path = _write(tmp_path, "amt,exp,age\nNA,1,2\n")
    with pytest.raises(EmptyDatasetError):
        load_csv(path, SCHEMA)


def test_distinct_error_types():
    assert not issubclass(MissingColumnError, InvalidInputError)
    assert not issubclass(FileNotFoundError, EmptyDatasetError)


def test_schema_validation(tmp_path):
    with pytest.raises(InvalidInputError):
        ColumnSchema("a", "a", "b")
    with pytest.raises(InvalidInputError):
        ColumnSchema("a", "b", "c", log=("d",))
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"treatment": "a", "anchors": "c"}))
    with pytest.raises(InvalidInputError, match="outcome"):
        ColumnSchema.from_json(p)


def test_multicolumn_anchor(tmp_path):
    path = _write(tmp_path, "a,b,c,d\n1,2,3,4\n5,6,7,8\n")
    d = load_csv(path, ColumnSchema("a", "b", ["c", "d"]))
    assert d.z.shape == (2, 2)


def _independent_counts(path):
    """Rows surviving the fixture's cleaning, counted per sex without pandas."""
    counts = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                amt, exp, age = float(row["packyrs"]), float(row["totalexp"]), float(row["lastage"])
            except ValueError:
                continue
            if amt <= 0 or exp <= 0:
                continue
            counts[row["male"]] = counts.get(row["male"], 0) + 1
    return counts


def test_fixture_group_partition(nmes_csv, nmes_schema):
    d = load_csv(nmes_csv, ColumnSchema.from_json(nmes_schema))
    assert d.meta == {"rows": 20, "dropped_missing": 4, "dropped_log": 1}
    males, females = split_by_group(d, "1")
    counts = _independent_counts(nmes_csv)
    assert (males.n, females.n) == (counts["1"], counts["0"])
    assert males.n + females.n == d.n


def test_split_all_match_and_alternating():
    d = Dataset(np.arange(4.0), np.arange(4.0), np.zeros(4), group=np.array(["a", "a", "a", "a"]))
    full, empty = split_by_group(d, "a")
    assert full.n == 4 and empty.n == 0
    d = Dataset(np.arange(4.0), np.arange(4.0), np.zeros(4), group=np.array(["m", "f", "m", "f"]))
    m, f = split_by_group(d, "m")
    assert (m.n, f.n) == (2, 2)
    np.testing.assert_array_equal(m.y, [0, 2])


def test_split_needs_group():
    with pytest.raises(InvalidInputError):
        split_by_group(Dataset([1.0], [1.0], [1.0]), "a")


def test_subsample_identity_and_determinism():
    d = generate("main", 50, 0)
    full = subsample(d, 50, 3)
    assert np.array_equal(full.y, d.y)
    assert np.array_equal(subsample(d, 10, 7).y, subsample(d, 10, 7).y)
    with pytest.raises(InvalidInputError):
        subsample(d, 51, 0)


def test_subsample_uniform():
    d = Dataset(np.arange(10.0), np.arange(10.0), np.zeros(10))
    picks = np.array([subsample(d, 1, s).y[0] for s in range(1000)])
    freq = np.bincount(picks.astype(int), minlength=10) / 1000
    assert np.all(np.abs(freq - 0.1) < 3 * math.sqrt(0.1 * 0.9 / 1000))


def test_dataset_validation():
    with pytest.raises(InvalidInputError):
        Dataset([1.0, 2.0], [1.0], [1.0, 2.0])
    with pytest.raises(InvalidInputError):
        Dataset([1.0, np.nan], [1.0, 2.0], [1.0, 2.0])


def test_dataset_csv_roundtrip(tmp_path):
    d = generate("variant", 40, 1)
    path = tmp_path / "d.csv"
    d.to_csv(path)
    back = load_csv(str(path), ColumnSchema("x", "y", "z"))
    assert np.array_equal(back.x, d.x) and np.array_equal(back.y, d.y) and np.array_equal(back.z, d.z)


def _report():
    r = TrialReport("mse", {"design": "main"}, n_trials=2)
    r.records = [("kar", 0, 0.1), ("kar", 1, 1 / 3), ("ols", 0, 0.2), ("ols", 1, 0.25)]
    r.curves = [{"x": 0.5, "truth": 0.0, "kar": 0.01}]
    return r


def test_empty_report_header_only(tmp_path):
    p = tmp_path / "r.csv"
    emit_report(TrialReport("mse", {}), p, "csv")
    assert p.read_text().splitlines() == ["method,trial,metric,value"]


def test_report_rows_and_precision(tmp_path):
    p = tmp_path / "r.csv"
    emit_report(_report(), p, "csv")
    lines = p.read_text().splitlines()
    assert len(lines) == 5
    assert lines[2] == "kar,1,mse,0.33333333333333331"


def test_report_roundtrip(tmp_path):
    r = _report()
    emit_report(r, tmp_path / "r.csv", "csv")
    emit_report(r, tmp_path / "r.json", "json")
    rows = read_report_csv(tmp_path / "r.csv")
    payload = json.loads((tmp_path / "r.json").read_text())
    assert set(payload) == {"config", "summary", "curves"}
    for method in ("kar", "ols"):
        recomputed = summarize([v for m, _, _, v in rows if m == method])
        for key in ("median", "q1", "q3"):
            assert recomputed[key] == payload["summary"][method][key]
        assert payload["summary"][method]["failures"] == 0


def test_report_io_error_names_path(tmp_path):
    bad = tmp_path / "missing_dir" / "r.csv"
    with pytest.raises(OSError, match="missing_dir"):
        emit_report(_report(), bad, "csv")
    with pytest.raises(InvalidInputError):
        emit_report(_report(), tmp_path / "r.xml", "xml")
