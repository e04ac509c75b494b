import io

import numpy as np
import pytest

from cpselect.criterion import MultiSampleCollection
from cpselect.errors import DataError, EmptyFile, MissingColumn, NonNumericCell
from cpselect.geno import GenoValue
from cpselect.io import (
    INTERCEPT_NAME,
    load_collection,
    long_row,
    model_label,
    parse_candidates,
    read_candidates,
    table_text,
    wide_table,
    write_collection,
    write_table,
)
from cpselect.regression import ModelSubset
from cpselect.selector import enumerate_candidates

SIX_ROWS = """id,y,x1,x2
a,1.0,0.5,2
a,2.0,1.5,1
b,0.3,-1,0
a,1.5,0.1,3
b,0.9,2,1
a,2.5,0.7,0
"""


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_grouping_by_id(tmp_path):
    coll, report = load_collection(write(tmp_path, SIX_ROWS))
    assert [(d.id, d.N) for d in coll.datasets] == [("a", 4), ("b", 2)]
    assert coll.covariate_names == [INTERCEPT_NAME, "x1", "x2"]
    a = coll.datasets[0]
    assert np.array_equal(a.X[:, 0], np.ones(4))
    assert a.y.tolist() == [1.0, 2.0, 1.5, 2.5]
    assert a.X[:, 2].tolist() == [2, 1, 3, 0]
    assert report.rows == 6 and report.datasets == 2 and report.dropped == []


def test_min_size_drops_small_datasets(tmp_path):
    coll, report = load_collection(write(tmp_path, SIX_ROWS), min_size=3)
    assert coll.ids == ["a"]
    assert report.dropped == [("b", 2)]
    with pytest.raises(EmptyFile):
        load_collection(write(tmp_path, SIX_ROWS), min_size=5)


def test_covariate_subset_and_renamed_columns(tmp_path):
    text = SIX_ROWS.replace("id,y", "grp,resp")
    coll, _ = load_collection(write(tmp_path, text), id_column="grp", response_column="resp", covariates=["x2"])
    assert coll.covariate_names == [INTERCEPT_NAME, "x2"]
    assert coll.datasets[1].X.shape == (2, 2)


def test_round_trip_is_exact(tmp_path, rng):
    src = write(tmp_path, SIX_ROWS)
    coll, _ = load_collection(src)
    out = tmp_path / "out.csv"
    write_collection(coll, out)
    again, _ = load_collection(out)
    for d1, d2 in zip(coll.datasets, again.datasets):
        assert d1.id == d2.id and d1.X.tobytes() == d2.X.tobytes() and d1.y.tobytes() == d2.y.tobytes()
    # awkward floats survive too
    from conftest import make_dataset
    X = np.column_stack([np.ones(5), rng.normal(size=5) * 1e-7])
    ds = make_dataset(X, rng.normal(size=5) / 3, id="z")
    ds.covariate_names = [INTERCEPT_NAME, "x"]
    write_collection(MultiSampleCollection([ds]), out)
    back, _ = load_collection(out)
    assert back.datasets[0].X.tobytes() == ds.X.tobytes() and back.datasets[0].y.tobytes() == ds.y.tobytes()


def test_missing_column(tmp_path):
    with pytest.raises(MissingColumn):
        load_collection(write(tmp_path, SIX_ROWS), response_column="nope")
    with pytest.raises(MissingColumn):
        load_collection(write(tmp_path, SIX_ROWS), covariates=["x9"])


def test_non_numeric_cell_location(tmp_path):
    text = SIX_ROWS.replace("b,0.9,2,1", "b,0.9,two,1")
    with pytest.raises(NonNumericCell) as info:
        load_collection(write(tmp_path, text))
    assert info.value.column == "x1" and info.value.row == 6 and info.value.value == "two"
    with pytest.raises(NonNumericCell):
        load_collection(write(tmp_path, SIX_ROWS.replace("0.3", "nan")))


def test_empty_and_ragged_files(tmp_path):
    with pytest.raises(EmptyFile):
        load_collection(write(tmp_path, ""))
    with pytest.raises(EmptyFile):
        load_collection(write(tmp_path, "id,y,x1\n"))
    with pytest.raises(DataError):
        load_collection(write(tmp_path, "id,y,x1\na,1\n"))


NAMES = [INTERCEPT_NAME, "x1", "x2", "x3"]


def test_candidate_list_forms():
    cs = parse_candidates([["x1"], {"label": "big", "covariates": ["x1", "x2"]}], NAMES)
    models = enumerate_candidates(cs)
    assert [m.indices for m in models] == [(0, 1), (0, 1, 2)]
    assert [model_label(m, NAMES) for m in models] == ["x1", "big"]
    assert model_label(ModelSubset((0,)), NAMES) == INTERCEPT_NAME


def test_candidate_modes():
    subsets = enumerate_candidates(parse_candidates({"mode": "all_subsets", "free": ["x1", "x3"]}, NAMES))
    assert [m.indices for m in subsets] == [(0,), (0, 1), (0, 3), (0, 1, 3)]
    con = enumerate_candidates(parse_candidates({"mode": "constrained", "forced_in": ["x1"], "forced_out": ["x2"]},
                                                NAMES))
    assert {m.indices for m in con} == {(0, 1), (0, 1, 3)}
    assert len(enumerate_candidates(read_candidates(None, NAMES))) == 8
    with pytest.raises(ValueError):
        parse_candidates({"mode": "greedy"}, NAMES)
    with pytest.raises(ValueError):
        parse_candidates("x1", NAMES)


def test_read_candidates_from_file(tmp_path):
    p = write(tmp_path, '[["x2"], ["x2", "x3"]]', "c.json")
    assert [m.indices for m in enumerate_candidates(read_candidates(str(p), NAMES))] == [(0, 2), (0, 2, 3)]
    inline = read_candidates('{"mode": "explicit", "models": [["x3"]]}', NAMES)
    assert [m.indices for m in enumerate_candidates(inline)] == [(0, 3)]


def test_long_table_formatting():
    rows = [long_row("geno", 60, "p2", "GENO", GenoValue(74.5, 60)),
            long_row("geno", 60, "p3", "GENO", GenoValue(None, 60), flags="infinite"),
            long_row("x", 5, "m", "C", 0.1, 0.02, 3, "corrected")]
    text = table_text(rows)
    lines = text.splitlines()
    assert lines[0] == "experiment,n,model,metric,value,se_or_sd,j_used,flags"
    assert lines[1] == "geno,60,p2,GENO,74.5,,,"
    assert lines[2] == "geno,60,p3,GENO,inf,,,infinite"
    assert lines[3] == "x,5,m,C,0.1,0.02,3,corrected"
    buf = io.StringIO()
    write_table(rows, buf)
    assert buf.getvalue() == text


def test_wide_table_splits_variants():
    rows = [long_row("s", n, m, "C", v, s, 1, tag)
            for n in (10, 20) for m, v, s in (("a", 1.234, 0.1), ("b", 2.0, None))
            for tag in ("corrected", "uncorrected")]
    cols, wide = wide_table(rows, "C")
    assert cols == ["n", "a corrected", "a uncorrected", "b corrected", "b uncorrected"]
    assert wide[0] == {"n": 10, "a corrected": "1.23 (0.10)", "a uncorrected": "1.23 (0.10)",
                       "b corrected": "2.00", "b uncorrected": "2.00"}
    cols1, _ = wide_table([r for r in rows if r["flags"] == "corrected"], "C")
    assert cols1 == ["n", "a", "b"]
