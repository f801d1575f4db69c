import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prodstack.core_data import (
    DuplicateKey,
    DynamicRecord,
    EmptyFile,
    FieldGeometry,
    InjectionRecord,
    MissingColumn,
    ParseError,
    SampleSet,
    StaticRecord,
    WellId,
    WellKind,
    WellSample,
    load_dynamic_csv,
    load_geometry_csv,
    load_injection_csv,
    load_static_csv,
    validate_dataset,
    write_dynamic_csv,
    write_geometry_csv,
    write_injection_csv,
    write_static_csv,
)

HEADER = "well_id,converted_central_depth,original_formation_pressure,original_formation_temperature,geological_reserves,effective_thickness\n"


def P(name):
    return WellId(name, WellKind.PRODUCER)


def I(name):
    return WellId(name, WellKind.INJECTOR)


def test_static_five_rows(tmp_path):
    body = "".join(f"P{i},2000,20,84,1e5,{5 + i}\n" for i in range(5))
    (tmp_path / "s.csv").write_text(HEADER + body)
    recs = load_static_csv(tmp_path / "s.csv")
    assert len(recs) == 5
    assert recs[2].effective_thickness == 7.0


def test_static_missing_column(tmp_path):
    (tmp_path / "s.csv").write_text(HEADER.replace(",effective_thickness", "") + "P1,1,2,3,4\n")
    with pytest.raises(MissingColumn, match="effective_thickness"):
        load_static_csv(tmp_path / "s.csv")


def test_static_empty_cell_is_missing(tmp_path):
    (tmp_path / "s.csv").write_text(HEADER + "P1,2000,,84,1e5,6\n")
    (rec,) = load_static_csv(tmp_path / "s.csv")
    assert rec.original_formation_pressure is None
    assert rec.converted_central_depth == 2000.0


@pytest.mark.parametrize("cell", ["NaN", "abc", "inf"])
def test_static_bad_cell(tmp_path, cell):
    (tmp_path / "s.csv").write_text(HEADER + f"P1,2000,{cell},84,1e5,6\n")
    with pytest.raises(ParseError):
        load_static_csv(tmp_path / "s.csv")


def test_empty_file(tmp_path):
    (tmp_path / "s.csv").write_text("")
    with pytest.raises(EmptyFile):
        load_static_csv(tmp_path / "s.csv")


def _dyn(well, months):
    return [DynamicRecord(P(well), m, 30.0, 1000.0, 50.0, 20.0, 3.0, 5.0, 1.0, 600.0, 40.0 - 0.1 * m) for m in months]


def test_dynamic_sixty_months_and_duplicates(tmp_path):
    write_dynamic_csv(tmp_path / "d.csv", _dyn("P1", range(1, 61)))
    assert len(load_dynamic_csv(tmp_path / "d.csv")) == 60
    text = (tmp_path / "d.csv").read_text()
    last = text.strip().splitlines()[-1]
    (tmp_path / "d2.csv").write_text(text + last + "\n")
    with pytest.raises(DuplicateKey):
        load_dynamic_csv(tmp_path / "d2.csv")


def test_injection_duplicate(tmp_path):
    (tmp_path / "i.csv").write_text("well_id,month,monthly_water_injection\nI1,1,100\nI1,1,200\n")
    with pytest.raises(DuplicateKey):
        load_injection_csv(tmp_path / "i.csv")


def test_geometry_bad_kind(tmp_path):
    (tmp_path / "g.csv").write_text("well_id,kind,x,y\nP1,Observer,0,0\n")
    with pytest.raises(ParseError):
        load_geometry_csv(tmp_path / "g.csv")


def test_validate_synthetic_field_is_clean(small_field):
    f = small_field
    assert validate_dataset(f.statics, f.dynamics, f.injections, f.geometry).ok


def test_validate_month_gap():
    geo = FieldGeometry({P("P1"): (0.0, 0.0)})
    rep = validate_dataset([StaticRecord(P("P1"), 1, 2, 3, 4, 5)], _dyn("P1", [1, 2, 4]), [], geo)
    assert [str(i) for i in rep.issues] == ["MonthGap(P1, 3)"]


def test_validate_missing_coordinates_defers_to_report(tmp_path):
    geo = FieldGeometry({P("P1"): (0.0, 0.0)})
    inj = [InjectionRecord(I("I1"), m, 100.0) for m in (1, 2, 3)]
    write_geometry_csv(tmp_path / "g.csv", geo)
    write_injection_csv(tmp_path / "i.csv", inj)
    loaded = load_injection_csv(tmp_path / "i.csv")
    rep = validate_dataset([StaticRecord(P("P1"), 1, 2, 3, 4, 5)], _dyn("P1", [1, 2, 3]), loaded, load_geometry_csv(tmp_path / "g.csv"))
    assert [i.kind for i in rep.issues] == ["MissingCoordinates"]
    assert rep.issues[0].well == "I1"


def test_validate_idempotent_and_order_insensitive(small_field):
    f = small_field
    dyn = list(f.dynamics)[:-5] + [dataclasses.replace(f.dynamics[0], month=200)]
    a = validate_dataset(f.statics, dyn, f.injections, f.geometry)
    b = validate_dataset(f.statics[::-1], dyn[::-1], f.injections[::-1], f.geometry)
    assert not a.ok
    assert a == b == validate_dataset(f.statics, dyn, f.injections, f.geometry)


def test_sample_set_rejects_duplicates_and_shape_mismatch():
    s = WellSample(P("P1"), np.zeros(5), np.zeros((4, 8)), np.zeros(4))
    with pytest.raises(ValueError):
        SampleSet([s, s])
    t = WellSample(P("P2"), np.zeros(5), np.zeros((3, 8)), np.zeros(3))
    with pytest.raises(ValueError):
        SampleSet([s, t])


def test_field_round_trip(tmp_path, small_field):
    f = small_field
    write_static_csv(tmp_path / "s.csv", f.statics)
    write_dynamic_csv(tmp_path / "d.csv", f.dynamics)
    write_injection_csv(tmp_path / "i.csv", f.injections)
    write_geometry_csv(tmp_path / "g.csv", f.geometry)
    assert load_static_csv(tmp_path / "s.csv") == f.statics
    assert load_dynamic_csv(tmp_path / "d.csv") == f.dynamics
    assert load_injection_csv(tmp_path / "i.csv") == f.injections
    assert load_geometry_csv(tmp_path / "g.csv").coords == f.geometry.coords


value = st.one_of(st.none(), st.floats(-1e12, 1e12, allow_nan=False, allow_infinity=False))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(value, value, value, value, value), min_size=1, max_size=8))
def test_static_round_trip_property(tmp_path_factory, rows):
    recs = [StaticRecord(P(f"W{i}"), *r) for i, r in enumerate(rows)]
    path = tmp_path_factory.mktemp("rt") / "s.csv"
    write_static_csv(path, recs)
    assert load_static_csv(path) == recs
