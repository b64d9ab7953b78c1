"""File-in/file-out steps behind the CLI subcommands."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import census as cen
from .autoencoder import Network
from .clustering import GroundtruthOverlay
from .classes import CLASSES, INDICATORS, LATENT_INDICATORS
from .errors import DataIntegrityError, MappingError, SchemaError
from .features import (
    FeatureMatrix,
    assemble,
    bands_from_table,
    load_band_grids,
    read_features,
    write_features,
)
from .metrics import (
    GroundtruthPoint,
    IndicatorScore,
    LabelMapping,
    build_overlay,
    read_groundtruth,
    score_indicator,
    write_report,
)
from .parallel import ordered_map
from .rasters import AsciiGrid, PixelGrid, load_pixel_grid, pixel_grids_from_table, write_ascii_grid
from .selection import PixelSet, read_pixel_sets, select_pixels, write_pixel_sets
from .taxonomy import assign_macro
from .training import SectorData, TrainConfig, predict_sector

log = logging.getLogger(__name__)

ASSIGNMENT_COLUMNS = ["row", "col", "roof_class", "wall_class", "height_class", "macro_class"]


# --- constraints -------------------------------------------------------------


def run_constraints(census_path, tables_dir, out) -> list[cen.ConstraintSet]:
    tables = cen.load_tables(tables_dir)
    sets = []
    for rec in cen.read_census(census_path):
        sets += list(cen.derive_constraints(rec, tables))
    cen.write_constraints(sets, out)
    return sets


# --- selection ---------------------------------------------------------------


def load_grids(path) -> dict[str, PixelGrid]:
    path = Path(path)
    if path.is_file():
        return pixel_grids_from_table(path)
    grids = {}
    for d in sorted(p for p in path.iterdir() if p.is_dir()):
        grids[d.name] = load_pixel_grid(d)
    if not grids:
        raise SchemaError(f"{path}: no sector grid directories found")
    return grids


def run_select(grids_path, constraints_path, out) -> list[PixelSet]:
    grids = load_grids(grids_path)
    totals = cen.read_settlement_pixels(constraints_path)
    for sector in totals:
        if sector not in grids:
            raise DataIntegrityError(f"no grid for sector {sector}")
    sectors = sorted(totals)
    sets = ordered_map(lambda s: select_pixels(grids[s], sum(totals[s].values())), sectors)
    write_pixel_sets(sets, out)
    return sets


# --- features ----------------------------------------------------------------


def run_features(bands_path, pixels_path, out_dir) -> dict[str, FeatureMatrix]:
    bands_path, out_dir = Path(bands_path), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pixel_sets = read_pixel_sets(pixels_path)
    table = bands_from_table(bands_path) if bands_path.is_file() else None

    def one(sector: str) -> FeatureMatrix:
        if table is not None:
            if sector not in table:
                raise DataIntegrityError(f"no band values for sector {sector}")
            bands, nodata = table[sector], None
        else:
            bands, nodata = load_band_grids(bands_path / sector)
        fm = assemble(bands, pixel_sets[sector], nodata)
        write_features(fm, out_dir / f"features_{sector}.csv")
        return fm

    sectors = sorted(pixel_sets)
    out = dict(zip(sectors, ordered_map(one, sectors)))
    write_pixel_sets([pixel_sets[s] for s in sorted(pixel_sets)], out_dir / "pixels.csv")
    return out


def load_feature_dir(features_dir) -> dict[str, FeatureMatrix]:
    features_dir = Path(features_dir)
    pixel_sets = read_pixel_sets(features_dir / "pixels.csv")
    return {s: read_features(features_dir / f"features_{s}.csv", s, ps.pixels) for s, ps in sorted(pixel_sets.items())}


# --- training data -----------------------------------------------------------


def dominant_settlement(per_type: Mapping[str, int]) -> str:
    return "rural" if per_type.get("rural", 0) > per_type.get("urban", 0) else "urban"


def build_sectors(features: Mapping[str, FeatureMatrix], targets: Mapping[str, Mapping[str, Mapping[str, int]]],
                  groundtruth: Mapping[str, Mapping[tuple[int, int], GroundtruthPoint]] | None,
                  mapping: LabelMapping | None,
                  settlement: Mapping[str, Mapping[str, int]] | None = None) -> list[SectorData]:
    sectors = []
    for sid, fm in features.items():
        if sid not in targets:
            raise DataIntegrityError(f"no constraints for sector {sid}")
        tvec = {ind: np.array(cen.class_targets(targets[sid].get(ind, {}), ind)) for ind in LATENT_INDICATORS}
        overlays = {}
        if groundtruth is not None and mapping is not None:
            gt = groundtruth.get(sid, {})
            overlays = {ind: build_overlay(fm.pixels, gt, mapping, ind) for ind in LATENT_INDICATORS}
        stype = dominant_settlement(settlement.get(sid, {})) if settlement else "urban"
        sectors.append(SectorData(sid, fm, tvec, overlays, stype))
    return sectors


def load_sectors(features_dir, constraints_path, gt_path=None, mapping: LabelMapping | None = None) -> list[SectorData]:
    gt = read_groundtruth(gt_path) if gt_path else None
    return build_sectors(load_feature_dir(features_dir), cen.read_pixel_targets(constraints_path), gt, mapping,
                         cen.read_settlement_pixels(constraints_path))


# --- prediction --------------------------------------------------------------


def predict(net: Network, sectors: Sequence[SectorData], tables: cen.ConditionalTables,
            cfg: TrainConfig | None = None) -> dict[str, dict[str, np.ndarray]]:
    """Class index per pixel for every indicator, macro included."""

    def one(sector: SectorData) -> dict[str, np.ndarray]:
        latent, states = predict_sector(net, sector, cfg)
        labels = {ind: states[ind].labels for ind in LATENT_INDICATORS}
        wall_latent = latent[:, LATENT_INDICATORS.index("wall")] if latent.size else np.zeros(0)
        labels["macro"] = assign_macro(labels["wall"], wall_latent, sector.settlement_type,
                                       tables.wall_macro, sector.sector_id).labels
        return labels

    return {s.sector_id: labels for s, labels in zip(sectors, ordered_map(one, sectors))}


def write_assignments(sector: SectorData, labels: Mapping[str, np.ndarray], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ASSIGNMENT_COLUMNS)
        for j, (r, c) in enumerate(sector.features.pixels):
            w.writerow([r, c, *(CLASSES[ind][labels[ind][j]] for ind in INDICATORS)])


def read_assignments(path) -> tuple[list[tuple[int, int]], dict[str, list[str]]]:
    pixels: list[tuple[int, int]] = []
    cols: dict[str, list[str]] = {ind: [] for ind in INDICATORS}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ASSIGNMENT_COLUMNS[:5]:
            if col not in (reader.fieldnames or []):
                raise SchemaError(f"{path}: missing column {col!r}")
        for r in reader:
            pixels.append((int(r["row"]), int(r["col"])))
            for ind in INDICATORS:
                cols[ind].append(r.get(f"{ind}_class", ""))
    return pixels, cols


def prediction_files(pred_dir) -> dict[str, Path]:
    files = sorted(Path(pred_dir).glob("assignments_*.csv"))
    if not files:
        raise SchemaError(f"{pred_dir}: no assignments_<sector>.csv files")
    return {f.stem[len("assignments_"):]: f for f in files}


# --- evaluation --------------------------------------------------------------


def evaluate_predictions(pred_dir, gt_path, mapping: LabelMapping) -> list[tuple[str, str, IndicatorScore]]:
    gt = read_groundtruth(gt_path)
    rows = []
    pooled: dict[str, list[tuple[np.ndarray, object]]] = {ind: [] for ind in LATENT_INDICATORS}
    for sid, path in prediction_files(pred_dir).items():
        pixels, cols = read_assignments(path)
        for ind in LATENT_INDICATORS:
            index = {c: i for i, c in enumerate(CLASSES[ind])}
            try:
                pred = np.array([index[c] for c in cols[ind]], dtype=np.int64)
            except KeyError as e:
                raise MappingError(f"{path}: unknown {ind} class {e.args[0]!r}") from None
            overlay = build_overlay(pixels, gt.get(sid, {}), mapping, ind)
            rows.append((sid, ind, score_indicator(pred, overlay)))
            pooled[ind].append((pred, overlay))
    for ind in LATENT_INDICATORS:
        preds = np.concatenate([p for p, _ in pooled[ind]]) if pooled[ind] else np.zeros(0, dtype=np.int64)
        ov = GroundtruthOverlay(
            np.concatenate([o.covered for _, o in pooled[ind]]) if pooled[ind] else np.zeros(0, bool),
            np.concatenate([o.allowed for _, o in pooled[ind]]) if pooled[ind]
            else np.zeros((0, len(CLASSES[ind])), bool),
        )
        rows.append(("ALL", ind, score_indicator(preds, ov)))
    return rows


def run_evaluate(pred_dir, gt_path, mapping: LabelMapping, out) -> list[tuple[str, str, IndicatorScore]]:
    rows = evaluate_predictions(pred_dir, gt_path, mapping)
    write_report(rows, out)
    return rows


# --- aggregation -------------------------------------------------------------


def read_hierarchy(path) -> dict[str, tuple[str, str]]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("sector_id", "district", "province"):
            if col not in (reader.fieldnames or []):
                raise SchemaError(f"{path}: missing column {col!r}")
        for r in reader:
            out[r["sector_id"]] = (r["district"], r["province"])
    return out


def sector_counts(pred_dir) -> dict[str, dict[str, dict[str, int]]]:
    """``{sector: {indicator: {class: pixels}}}`` from assignment files."""
    out = {}
    for sid, path in prediction_files(pred_dir).items():
        _, cols = read_assignments(path)
        out[sid] = {ind: {c: cols[ind].count(c) for c in CLASSES[ind]} for ind in INDICATORS}
    return out


def aggregate(counts: Mapping[str, Mapping[str, Mapping[str, int]]],
              hierarchy: Mapping[str, tuple[str, str]]) -> list[dict]:
    """Pixel and building counts per class at sector, district and province level."""
    unknown = sorted(set(counts) - set(hierarchy))
    if unknown:
        raise MappingError(f"sectors missing from the admin hierarchy: {unknown}")
    levels = {"sector": {}, "district": {}, "province": {}}
    for sid in sorted(counts):
        district, province = hierarchy[sid]
        for level, unit in (("sector", sid), ("district", district), ("province", province)):
            acc = levels[level].setdefault(unit, {ind: dict.fromkeys(CLASSES[ind], 0) for ind in INDICATORS})
            for ind in INDICATORS:
                for c, n in counts[sid][ind].items():
                    acc[ind][c] += n
    rows = []
    for level, units in levels.items():
        for unit in sorted(units):
            for ind in INDICATORS:
                for c in CLASSES[ind]:
                    px = units[unit][ind][c]
                    rows.append({"level": level, "unit": unit, "indicator": ind, "class": c,
                                 "pixels": px, "buildings": cen.pixels_to_buildings(px)})
    return rows


def write_aggregate(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, ["level", "unit", "indicator", "class", "pixels", "buildings"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def export_class_grids(pred_dir, grids_shape: Mapping[str, tuple[int, int]], out_dir) -> None:
    """One ASCII grid per sector and indicator holding the class index (nodata elsewhere)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for sid, path in prediction_files(pred_dir).items():
        pixels, cols = read_assignments(path)
        if sid in grids_shape:
            shape = grids_shape[sid]
        else:
            shape = (max((p[0] for p in pixels), default=0) + 1, max((p[1] for p in pixels), default=0) + 1)
        for ind in INDICATORS:
            index = {c: i for i, c in enumerate(CLASSES[ind])}
            arr = np.full(shape, np.nan)
            for (r, c), name in zip(pixels, cols[ind]):
                if name:
                    arr[r, c] = index[name]
            write_ascii_grid(AsciiGrid(arr), out_dir / f"{sid}_{ind}.asc")


