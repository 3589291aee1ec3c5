import json

import pytest
from hypothesis import given, strategies as st

from daindex.cohort import (Cohort, Direction, MeasurementSpec, PatientRecord, add_normalised_mm,
                            derive_normalised_mm, load_cohort, load_specs, split_by_group, write_cohort)
from daindex.errors import ParseError, ValidationError

SPEC = MeasurementSpec("creatinine_max", 0.0, 50.0, {"male": 1.35, "female": 1.04}, default_stratum="male")


def write(tmp_path, text, name="cohort.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_three_rows(tmp_path):
    path = write(tmp_path, "id,group,creatinine_max\n1,male,0.9\n2,female,1.2\n3,male,2.5\n")
    cohort = load_cohort(path, [SPEC])
    assert len(cohort) == 3
    assert cohort.records[2].measurements == {"creatinine_max": 2.5}
    assert cohort.groups == {"male", "female"}


def test_bound_violation_names_record(tmp_path):
    path = write(tmp_path, "id,group,creatinine_max\n1,male,0.9\nbad,male,-1\n")
    with pytest.raises(ValidationError, match="bad.*creatinine_max"):
        load_cohort(path, [SPEC])


def test_empty_cell_is_absent(tmp_path):
    path = write(tmp_path, "id,group,creatinine_max\n1,male,\n2,male,1.0\n")
    cohort = load_cohort(path, [SPEC])
    assert len(cohort) == 2
    assert "creatinine_max" not in cohort.records[0].measurements
    assert cohort.n_missing("creatinine_max") == 1
    assert cohort.values("creatinine_max").tolist() == [1.0]


def test_malformed_row_reports_row_number(tmp_path):
    path = write(tmp_path, "id,group,creatinine_max\n1,male,0.9\n2,male\n")
    with pytest.raises(ParseError) as err:
        load_cohort(path, [SPEC])
    assert err.value.row == 2


def test_unparseable_number(tmp_path):
    path = write(tmp_path, "id,group,creatinine_max\n1,male,abc\n")
    with pytest.raises(ParseError, match="row 1"):
        load_cohort(path, [SPEC])


def test_unknown_group_label(tmp_path):
    path = write(tmp_path, "id,group,creatinine_max\n1,male,0.9\n2,other,1.0\n")
    with pytest.raises(ValidationError, match="other"):
        load_cohort(path, [SPEC], groups=["male", "female"])


def test_score_outside_unit_interval(tmp_path):
    path = write(tmp_path, "id,group,allocation_score,creatinine_max\n1,male,1.5,0.9\n")
    with pytest.raises(ValidationError, match="allocation_score"):
        load_cohort(path, [SPEC])


def test_specs_file_round_trip(tmp_path):
    payload = {"creatinine_max": {"unit": "mg/dL", "lb": 0, "ub": 50, "thresholds": {"male": 1.35},
                                  "direction": "higher_is_worse", "discrete": False}}
    path = write(tmp_path, json.dumps(payload), "specs.json")
    specs = load_specs(path)
    assert specs["creatinine_max"].threshold("anything") == 1.35
    assert specs["creatinine_max"].direction is Direction.HIGHER_IS_WORSE


@pytest.mark.parametrize("kwargs", [
    dict(lb=1.0, ub=1.0, thresholds={"a": 1.0}),
    dict(lb=0.0, ub=1.0, thresholds={}),
    dict(lb=0.0, ub=1.0, thresholds={"a": 1.0}),
])
def test_spec_invariants(kwargs):
    with pytest.raises(ValidationError):
        MeasurementSpec("m", **kwargs)


def test_stratum_threshold_resolution():
    assert SPEC.threshold("female") == 1.04
    assert SPEC.threshold(None) == 1.35
    assert SPEC.threshold("unknown") == 1.35


def ten_records():
    return [PatientRecord(str(i), "male" if i < 6 else "female", {"creatinine_max": 1.0}) for i in range(10)]


def test_split_counts():
    cohort = Cohort(ten_records(), {"creatinine_max": SPEC})
    a, b = split_by_group(cohort, "male", "female")
    assert (len(a), len(b)) == (6, 4)


def test_split_unknown_label():
    cohort = Cohort(ten_records(), {"creatinine_max": SPEC})
    with pytest.raises(ValidationError, match="white"):
        split_by_group(cohort, "white", "non-white")


def test_split_declared_but_empty():
    recs = [PatientRecord(str(i), "male", {"creatinine_max": 1.0}) for i in range(10)]
    cohort = Cohort(recs, {"creatinine_max": SPEC}, frozenset({"male", "female"}))
    a, b = split_by_group(cohort, "male", "female")
    assert (len(a), len(b)) == (10, 0)


@given(st.lists(st.sampled_from(["a", "b", "c"]), min_size=1, max_size=40))
def test_split_is_partition(labels):
    recs = [PatientRecord(str(i), g, {}) for i, g in enumerate(labels)]
    cohort = Cohort(recs, {}, frozenset({"a", "b", "c"}))
    a, b = split_by_group(cohort, "a", "b")
    ids_a = {r.patient_id for r in a.records}
    ids_b = {r.patient_id for r in b.records}
    assert not ids_a & ids_b
    assert ids_a | ids_b == {r.patient_id for r in recs if r.group_label in ("a", "b")}


@pytest.mark.parametrize("mm,age,expected", [(4, 65.0, 4.0), (3, 39.0, 5.0), (0, 80.0, 0.0)])
def test_normalised_mm(mm, age, expected):
    rec = PatientRecord("p", "g", mm_count=mm, age=age)
    assert derive_normalised_mm(rec) == pytest.approx(expected, abs=1e-12)


@given(st.integers(0, 40), st.floats(1.0, 110.0))
def test_normalised_mm_homogeneous(mm, age):
    one = derive_normalised_mm(PatientRecord("p", "g", mm_count=mm, age=age))
    two = derive_normalised_mm(PatientRecord("p", "g", mm_count=2 * mm, age=age))
    assert two == pytest.approx(2 * one, rel=1e-12, abs=1e-12)


def test_normalised_mm_skips_missing():
    recs = [PatientRecord("1", "g", mm_count=3, age=39.0), PatientRecord("2", "g", mm_count=3)]
    with pytest.warns(UserWarning, match="1 record"):
        cohort, skipped = add_normalised_mm(Cohort(recs, {}))
    assert skipped == 1
    assert cohort.records[0].measurements["normalised_mm"] == pytest.approx(5.0)
    assert "normalised_mm" not in cohort.records[1].measurements


finite = st.floats(0.0, 50.0, allow_nan=False)


@given(st.lists(st.tuples(st.sampled_from(["male", "female"]), st.one_of(st.none(), finite),
                          st.one_of(st.none(), st.floats(0.0, 1.0)), st.one_of(st.none(), st.integers(0, 9))),
                min_size=1, max_size=25))
def test_csv_round_trip(tmp_path_factory, rows):
    recs = []
    for i, (g, v, score, mm) in enumerate(rows):
        meas = {} if v is None else {"creatinine_max": v}
        recs.append(PatientRecord(f"id{i}", g, meas, stratum_label=g, allocation_score=score,
                                  age=40.5 + i, mm_count=mm))
    cohort = Cohort(recs, {"creatinine_max": SPEC})
    path = tmp_path_factory.mktemp("rt") / "c.csv"
    write_cohort(cohort, path)
    again = load_cohort(path, [SPEC])
    assert again.records == cohort.records
