import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ccc import census as cen
from ccc.classes import HEIGHT_CLASSES, MACRO_CLASSES, WALL_CLASSES
from ccc.errors import DegenerateInputError, SchemaError, ValidationError

TABLES = cen.load_tables()


def hamilton_oracle(total, shares):
    """Seat-by-seat largest remainder in exact arithmetic."""
    shares = [Fraction(repr(float(s))) for s in shares]
    quotas = [total * s / sum(shares) for s in shares]
    seats = [math.floor(q) for q in quotas]
    rema = [q - s for q, s in zip(quotas, seats)]
    for _ in range(total - sum(seats)):
        best = max(range(len(rema)), key=lambda i: (rema[i], -i))
        seats[best] += 1
        rema[best] = Fraction(-1)
    return seats


def normalized(weights):
    total = sum(weights)
    vals = [w / total for w in weights]
    vals[-1] = 1.0 - math.fsum(vals[:-1])
    return vals


share_lists = st.lists(st.integers(0, 1000), min_size=1, max_size=9).filter(lambda w: sum(w) > 0).map(normalized)


# --- household size and dwellings ----------------------------------------------

@pytest.mark.parametrize("pop, hh, expected", [(5460, 1000, 5.46), (1000, 1000, 1.0), (11531, 2500, 4.6124)])
def test_household_size_examples(pop, hh, expected):
    assert cen.compute_household_size(pop, hh) == pytest.approx(expected, abs=1e-12)


def test_household_size_zero_households_names_sector():
    with pytest.raises(DegenerateInputError, match="Gitovu"):
        cen.compute_household_size(100, 0, "Gitovu")


@pytest.mark.parametrize("u, r, h, expected", [
    (1000, 0, 5.0, (200.0, 0.0)),
    (546, 546, 5.46, (100.0, 100.0)),
    (0, 0, 4.0, (0.0, 0.0)),
])
def test_compute_dwellings_examples(u, r, h, expected):
    assert cen.compute_dwellings(u, r, h) == pytest.approx(expected)


@pytest.mark.parametrize("h", [0.0, -1.0])
def test_compute_dwellings_rejects_nonpositive_size(h):
    with pytest.raises(DegenerateInputError):
        cen.compute_dwellings(10, 10, h)


# --- apportionment ------------------------------------------------------------

@pytest.mark.parametrize("total, shares, expected", [
    (100, [0.3, 0.2, 0.3, 0.2], [30, 20, 30, 20]),
    (10, [0.475, 0.475, 0.05], [5, 5, 0]),
    (0, [0.5, 0.5], [0, 0]),
])
def test_apportion_examples(total, shares, expected):
    assert cen.apportion(total, shares) == expected


def test_apportion_rejects_unnormalized_shares():
    with pytest.raises(ValidationError):
        cen.apportion(10, [0.5, 0.6])


def test_apportion_ties_go_to_lower_index():
    assert cen.apportion(1, [0.5, 0.5]) == [1, 0]
    assert cen.apportion(3, [0.25, 0.25, 0.25, 0.25]) == [1, 1, 1, 0]


@given(st.integers(0, 10**6), share_lists)
def test_apportion_matches_seat_by_seat_oracle(total, shares):
    assert cen.apportion(total, shares) == hamilton_oracle(total, shares)


@given(st.integers(0, 10**6), share_lists)
def test_apportion_conserves_and_stays_within_one(total, shares):
    out = cen.apportion(total, shares)
    assert sum(out) == total
    assert all(isinstance(v, int) and v >= 0 for v in out)
    for v, s in zip(out, shares):
        assert abs(v - total * Fraction(repr(s))) < 1


@given(st.integers(0, 10**5), share_lists)
def test_apportion_growth_never_loses_more_than_one(total, shares):
    # largest remainder is not house-monotone (see next test); what holds is
    # that each class stays between floor and ceil of its quota, so one more
    # unit moves any class by at most one.
    a, b = cen.apportion(total, shares), cen.apportion(total + 1, shares)
    assert all(abs(y - x) <= 1 for x, y in zip(a, b))
    assert sum(b) - sum(a) == 1


def test_apportion_is_not_house_monotone():
    # a growing total can take a unit away from a class
    shares = [0.05, 0.15, 0.8]
    assert cen.apportion(10, shares) == [1, 1, 8]
    assert cen.apportion(11, shares) == [0, 2, 9]


# --- unit conversions --------------------------------------------------------------

@pytest.mark.parametrize("b, p", [(1000, 600), (0, 0), (1, 1), (2, 1), (5, 3)])
def test_buildings_to_pixels_examples(b, p):
    assert cen.buildings_to_pixels(b) == p


def test_pixel_building_round_trips_over_full_range():
    # exact integer forms of the two half-up conversions, checked on 0..10^6
    b = np.arange(0, 10**6 + 1, dtype=np.int64)
    to_px = lambda n: (n * 6 + 5) // 10  # floor(0.6 n + 1/2)
    to_bldg = lambda p: (p * 10 + 3) // 6  # floor(p / 0.6 + 1/2)
    assert all(to_px(n) == cen.buildings_to_pixels(int(n)) for n in (0, 1, 2, 3, 4, 5, 999_999, 10**6))
    assert all(to_bldg(n) == cen.pixels_to_buildings(int(n)) for n in (0, 1, 2, 3, 4, 5, 999_999, 10**6))
    # pixels -> buildings -> pixels is the identity
    assert np.array_equal(to_px(to_bldg(b)), b)
    # buildings -> pixels -> buildings comes back within one building
    assert np.abs(to_bldg(to_px(b)) - b).max() == 1


def test_buildings_to_pixels_is_not_injective():
    # 0.6 compresses counts, so building counts cannot be recovered exactly
    assert cen.buildings_to_pixels(3) == cen.buildings_to_pixels(4) == 2
    assert cen.pixels_to_buildings(2) == 3


def test_round_half_up():
    assert [cen.round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4999)] == [1, 2, 3, 2]


def test_dwellings_to_buildings_examples():
    assert cen.dwellings_to_buildings(1000, TABLES.height_dwellings.lookup("H:1", "urban")) == 1000
    assert cen.dwellings_to_buildings(100, TABLES.height_dwellings.lookup("HBET:8+", "urban")) == 7


# --- tables -------------------------------------------------------------------------

def test_bundled_tables_cover_every_wall_class_in_both_settings():
    for wall in WALL_CLASSES:
        for stype in ("urban", "rural"):
            rows = TABLES.wall_macro.lookup(wall, stype)
            assert {r.target for r in rows} <= set(MACRO_CLASSES)
    for macro in MACRO_CLASSES:
        assert {r.target for r in TABLES.macro_height.lookup(macro, "urban")} <= set(HEIGHT_CLASSES)
    for h in HEIGHT_CLASSES:
        assert TABLES.height_dwellings.lookup(h, "rural")


def test_table_rows_must_sum_to_one():
    rows = (cen.ConditionalRow("A", "any", "x", 0.5), cen.ConditionalRow("A", "any", "y", 0.4))
    with pytest.raises(ValidationError, match="sum"):
        cen.ConditionalTable("wall_macro", rows)


def test_dwelling_rows_need_positive_ratio():
    with pytest.raises(ValidationError):
        cen.ConditionalTable("height_dwellings", (cen.ConditionalRow("H:1", "any", "x", 1.0, 0),))


def test_lookup_missing_source_is_schema_error():
    with pytest.raises(SchemaError, match="Bamboo"):
        TABLES.wall_macro.lookup("Bamboo", "urban")


def test_table_parse_serialize_parse_is_identity(tmp_path):
    for kind, table in TABLES._asdict().items():
        p = tmp_path / f"{kind}.csv"
        cen.write_table(table, p)
        again = cen.read_table(p, kind)
        assert again == table
        cen.write_table(again, tmp_path / "second.csv")
        assert (tmp_path / "second.csv").read_bytes() == p.read_bytes()


# --- census records -----------------------------------------------------------

def record(walls=None, roofs=None, urban=5000, rural=2000, households=1500, sid="S1"):
    walls = walls or {"Sun-dried bricks": 0.5, "Cement blocks": 0.3, "Concrete": 0.2}
    roofs = roofs or {"Iron Sheets": 0.7, "Tiles": 0.3}
    return cen.CensusRecord(sid, urban, rural, households, walls, roofs)


def test_census_record_validates_shares():
    with pytest.raises(ValidationError):
        record(walls={"Stone": 0.9})
    with pytest.raises(DegenerateInputError):
        record(households=0)
    with pytest.raises(ValidationError):
        record(urban=-1)


census_records = st.builds(
    lambda sid, u, r, hh, w, ro: cen.CensusRecord(
        sid, u, r, hh, dict(zip(WALL_CLASSES, normalized(w))), dict(zip(("Iron Sheets", "Tiles", "Concrete", "Grass"), normalized(ro)))
    ),
    st.from_regex(r"S[0-9]{1,4}", fullmatch=True),
    st.integers(0, 200_000),
    st.integers(0, 200_000),
    st.integers(1, 60_000),
    st.lists(st.integers(0, 100), min_size=8, max_size=8).filter(lambda w: sum(w) > 0),
    st.lists(st.integers(0, 100), min_size=4, max_size=4).filter(lambda w: sum(w) > 0),
)


@given(st.lists(census_records, min_size=1, max_size=4))
def test_census_parse_serialize_parse_is_identity(tmp_path_factory, records):
    d = tmp_path_factory.mktemp("census")
    cen.write_census(records, d / "a.csv")
    again = cen.read_census(d / "a.csv")
    assert again == records
    cen.write_census(again, d / "b.csv")
    assert (d / "a.csv").read_bytes() == (d / "b.csv").read_bytes()


def test_read_census_requires_columns(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("sector_id,urban_pop,households\nS1,1,1\n")
    with pytest.raises(SchemaError, match="rural_pop"):
        cen.read_census(p)


# --- derive_constraints -------------------------------------------------------------

def test_wood_with_mud_urban_maps_to_single_macro_class():
    rec = record(walls={"Wood with mud": 1.0}, urban=5000, rural=0, households=1000)
    urban, rural = cen.derive_constraints(rec, TABLES)
    macro = {k: v for k, v in urban.dwelling_counts["macro"].items() if v}
    assert macro == {"W+WWD/LWAL": 1000}
    assert rural.total_dwellings == 0
    assert {k for k, v in urban.building_counts["macro"].items() if v} == {"W+WWD/LWAL"}


def test_missing_wall_rows_is_schema_error():
    rows = tuple(r for r in TABLES.wall_macro.rows if r.source != "Stone")
    tables = TABLES._replace(wall_macro=cen.ConditionalTable("wall_macro", rows))
    with pytest.raises(SchemaError, match="Stone"):
        cen.derive_constraints(record(walls={"Stone": 1.0}), tables)


def check_constraint_set(cs: cen.ConstraintSet, census: cen.CensusRecord, tables):
    dw = cs.dwelling_counts
    assert sum(dw["wall"].values()) == cs.total_dwellings
    # chain conservation, also per source class
    assert sum(dw["macro"].values()) == sum(dw["wall"].values())
    assert sum(dw["height"].values()) == sum(dw["macro"].values())
    macro_oracle = {}
    for wall, n in dw["wall"].items():
        if n:
            rows = tables.wall_macro.lookup(wall, cs.settlement_type)
            for r, k in zip(rows, hamilton_oracle(n, [r.probability for r in rows])):
                macro_oracle[r.target] = macro_oracle.get(r.target, 0) + k
    assert {k: v for k, v in dw["macro"].items() if v} == {k: v for k, v in macro_oracle.items() if v}
    # buildings: every indicator sums to the same total
    for ind in ("roof", "wall", "height", "macro"):
        assert sum(cs.building_counts[ind].values()) == cs.total_buildings, ind
    height_oracle = sum(
        cen.dwellings_to_buildings(n, tables.height_dwellings.lookup(h, cs.settlement_type))
        for h, n in dw["height"].items()
    )
    assert cs.total_buildings == height_oracle
    # pixels: one global factor, equal totals across indicators
    wall_px = {k: cen.buildings_to_pixels(v) for k, v in cs.building_counts["wall"].items()}
    assert cs.pixel_counts["wall"] == wall_px
    totals = {ind: sum(cs.pixel_counts[ind].values()) for ind in cs.pixel_counts}
    assert len(set(totals.values())) == 1
    residual = abs(totals["wall"] - Fraction(6, 10) * cs.total_buildings)
    for ind in ("roof", "height", "macro"):
        for c, n in cs.pixel_counts[ind].items():
            assert abs(n - Fraction(6, 10) * cs.building_counts[ind][c]) < 1 + residual


@given(census_records)
def test_derive_constraints_conserves_through_the_chain(rec):
    urban, rural = cen.derive_constraints(rec, TABLES)
    assert urban.settlement_type == "urban" and rural.settlement_type == "rural"
    if rec.population:
        assert abs(urban.total_dwellings + rural.total_dwellings - rec.private_households) <= 1
    for cs in (urban, rural):
        check_constraint_set(cs, rec, TABLES)


def test_constraints_file_round_trip(tmp_path):
    sets = list(cen.derive_constraints(record(), TABLES))
    cen.write_constraints(sets, tmp_path / "c.csv")
    targets = cen.read_pixel_targets(tmp_path / "c.csv")
    for ind in ("roof", "wall", "height", "macro"):
        for c, n in targets["S1"][ind].items():
            assert n == sum(cs.pixel_counts[ind].get(c, 0) for cs in sets)
    per_type = cen.read_settlement_pixels(tmp_path / "c.csv")
    assert per_type["S1"] == {cs.settlement_type: cs.total_pixels for cs in sets}


def test_class_targets_order_and_unknown_classes():
    assert cen.class_targets({"Tiles": 3}, "roof") == [0, 3, 0, 0]
    with pytest.raises(SchemaError):
        cen.class_targets({"Thatch": 3}, "roof")
