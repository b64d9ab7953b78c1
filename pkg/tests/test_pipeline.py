import numpy as np
import pytest

from ccc import census as cen
from ccc import pipeline as pl
from ccc import synth
from ccc.autoencoder import Network
from ccc.classes import CLASSES, INDICATORS, LATENT_INDICATORS, WALL_CLASSES
from ccc.errors import DataIntegrityError, MappingError
from ccc.metrics import load_mappings
from ccc.rasters import read_ascii_grid
from ccc.training import TrainConfig


def counts(**per_indicator):
    out = {ind: dict.fromkeys(CLASSES[ind], 0) for ind in INDICATORS}
    for ind, d in per_indicator.items():
        out[ind].update(d)
    return out


def test_aggregate_single_sector_equals_province():
    c = {"A": counts(roof={"Tiles": 10}, wall={"Stone": 10}, height={"H:1": 10}, macro={"MATO": 10})}
    rows = pl.aggregate(c, {"A": ("D1", "P1")})
    by = {(r["level"], r["indicator"], r["class"]): (r["pixels"], r["buildings"]) for r in rows}
    for ind, cls in (("roof", "Tiles"), ("wall", "Stone")):
        assert by[("sector", ind, cls)] == by[("district", ind, cls)] == by[("province", ind, cls)] == (10, 17)


def test_aggregate_two_equal_sectors_double():
    one = counts(roof={"Iron Sheets": 7, "Grass": 3})
    rows = pl.aggregate({"A": one, "B": one}, {"A": ("D1", "P1"), "B": ("D1", "P1")})
    d = {(r["level"], r["unit"], r["class"]): r["pixels"] for r in rows if r["indicator"] == "roof"}
    assert d[("district", "D1", "Iron Sheets")] == 2 * d[("sector", "A", "Iron Sheets")] == 14


def test_aggregate_additivity_random():
    rng = np.random.default_rng(0)
    sectors = {f"S{i}": counts(**{ind: {c: int(rng.integers(0, 50)) for c in CLASSES[ind]} for ind in INDICATORS})
               for i in range(12)}
    hierarchy = {s: (f"D{i // 3}", f"P{i // 6}") for i, s in enumerate(sectors)}
    rows = pl.aggregate(sectors, hierarchy)
    table = {}
    for r in rows:
        table.setdefault((r["level"], r["indicator"], r["class"]), {})[r["unit"]] = r["pixels"]
    for ind in INDICATORS:
        for c in CLASSES[ind]:
            s = sum(table[("sector", ind, c)].values())
            assert s == sum(table[("district", ind, c)].values()) == sum(table[("province", ind, c)].values())
            for d in {h[0] for h in hierarchy.values()}:
                members = [k for k, h in hierarchy.items() if h[0] == d]
                assert table[("district", ind, c)][d] == sum(table[("sector", ind, c)][k] for k in members)
    for r in rows:
        assert r["buildings"] == cen.pixels_to_buildings(r["pixels"])


def test_aggregate_unknown_sector():
    with pytest.raises(MappingError, match="Z"):
        pl.aggregate({"Z": counts()}, {"A": ("D", "P")})


def truth_assignments(sc, root):
    root.mkdir(parents=True, exist_ok=True)
    tables = cen.load_tables()
    for s in sc.sectors:
        labels = dict(s.classes)
        labels["macro"] = np.zeros(len(s.pixels), dtype=np.int64)
        sector = pl.SectorData(s.sector_id, pl.FeatureMatrix(s.sector_id, [tuple(map(int, p)) for p in s.pixels],
                                                              np.zeros((len(s.pixels), 14))),
                               {ind: np.array(cen.class_targets(sc.targets(s.sector_id)[ind], ind))
                                for ind in LATENT_INDICATORS}, {})
        from ccc.taxonomy import assign_macro

        stype = pl.dominant_settlement({cs.settlement_type: cs.total_pixels for cs in sc.constraints
                                        if cs.sector_id == s.sector_id})
        labels["macro"] = assign_macro(labels["wall"], np.arange(len(s.pixels), dtype=float), stype,
                                       tables.wall_macro).labels
        pl.write_assignments(sector, labels, root / f"assignments_{s.sector_id}.csv")


def test_aggregating_planted_classes_reproduces_constraints(tmp_path):
    sc = synth.generate(4, synth.ScenarioConfig(n_sectors=4, pixels_per_sector=200))
    truth_assignments(sc, tmp_path / "pred")
    rows = pl.aggregate(pl.sector_counts(tmp_path / "pred"), {s: (d, p) for s, d, p in sc.hierarchy})
    for r in rows:
        if r["level"] == "sector" and r["indicator"] in LATENT_INDICATORS:
            assert r["pixels"] == sc.targets(r["unit"])[r["indicator"]].get(r["class"], 0)
        if r["level"] == "province" and r["indicator"] in LATENT_INDICATORS:
            members = [s for s, _, p in sc.hierarchy if p == r["unit"]]
            assert r["pixels"] == sum(sc.targets(s)[r["indicator"]].get(r["class"], 0) for s in members)


def test_macro_counts_track_macro_constraints(small_bundle):
    sectors = pl.load_sectors(small_bundle / "feat", small_bundle / "constraints.csv")
    labels = pl.predict(Network.initialize(0), sectors, cen.load_tables(), TrainConfig())
    targets = cen.read_pixel_targets(small_bundle / "constraints.csv")
    for s in sectors:
        pred = np.bincount(labels[s.sector_id]["macro"], minlength=len(CLASSES["macro"]))
        want = np.array(cen.class_targets(targets[s.sector_id]["macro"], "macro"))
        assert pred.sum() == want.sum()
        # both sides apportion the same wall totals; they drift apart by rounding only
        assert np.abs(pred - want).max() <= len(WALL_CLASSES)


def test_predictions_match_wall_targets_and_export(small_bundle, tmp_path):
    sectors = pl.load_sectors(small_bundle / "feat", small_bundle / "constraints.csv")
    labels = pl.predict(Network.initialize(1), sectors, cen.load_tables())
    for s in sectors:
        for ind in LATENT_INDICATORS:
            assert np.bincount(labels[s.sector_id][ind], minlength=len(CLASSES[ind])).tolist() == s.targets[ind].tolist()
        pl.write_assignments(s, labels[s.sector_id], tmp_path / f"assignments_{s.sector_id}.csv")
    shapes = {sid: g.shape for sid, g in pl.load_grids(small_bundle / "grids").items()}
    pl.export_class_grids(tmp_path, shapes, tmp_path / "grids")
    sid = sectors[0].sector_id
    g = read_ascii_grid(tmp_path / "grids" / f"{sid}_wall.asc")
    assert g.shape == shapes[sid]
    assert int(g.valid_mask().sum()) == sectors[0].n_pixels


def test_evaluate_predictions_pools_sectors(small_bundle, tmp_path):
    sectors = pl.load_sectors(small_bundle / "feat", small_bundle / "constraints.csv")
    labels = pl.predict(Network.initialize(2), sectors, cen.load_tables())
    for s in sectors:
        pl.write_assignments(s, labels[s.sector_id], tmp_path / f"assignments_{s.sector_id}.csv")
    rows = pl.evaluate_predictions(tmp_path, small_bundle / "gt.csv", load_mappings(small_bundle / "mappings"))
    for ind in LATENT_INDICATORS:
        per = [sc for sid, i, sc in rows if i == ind and sid != "ALL"]
        pooled = next(sc for sid, i, sc in rows if i == ind and sid == "ALL")
        assert pooled.covered == sum(p.covered for p in per)
        assert pooled.tp == sum(p.tp for p in per)


def test_select_requires_grid_for_every_sector(small_bundle, tmp_path):
    import shutil

    shutil.copytree(small_bundle / "grids", tmp_path / "grids")
    shutil.rmtree(tmp_path / "grids" / "S01")
    with pytest.raises(DataIntegrityError, match="S01"):
        pl.run_select(tmp_path / "grids", small_bundle / "constraints.csv", tmp_path / "px.csv")
