"""Synthetic input bundles with planted, known per-pixel classes.

A scenario starts from a census record per sector, derives the pixel
constraints exactly as the real pipeline does, and then plants that many
pixels of each class on a grid. Band values are log-linear in the class
ranks along orthogonal band directions, one per indicator, so at zero noise
every indicator is linearly recoverable from the bands.
"""

from __future__ import annotations

import csv
import math
import shutil
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .census import (
    TABLE_FILES,
    CensusRecord,
    ConstraintSet,
    derive_constraints,
    load_tables,
    write_census,
    write_constraints,
)
from .classes import CLASSES, LATENT_INDICATORS
from .features import BAND_NAMES
from .metrics import write_mapping_csv
from .rasters import AsciiGrid, write_ascii_grid

# Table of height-label ranges each height class is compatible with.
HEIGHT_RANGES = {
    "H:1": [("(0,6)", 3.0)],
    "H:2": [("(0,6)", 5.0), ("[6,9)", 7.5)],
    "H:3": [("[6,9)", 8.0), ("[9,12)", 10.5)],
    "HBET:3-6": [("[6,9)", 8.5), ("[9,12)", 11.0), ("[12,21)", 16.0)],
    "HBET:4-7": [("[9,12)", 11.5), ("[12,21)", 18.0), ("[21,24)", 22.5)],
    "HBET:8+": [("[21,24)", 23.0), ("[24,inf)", 30.0)],
}


@dataclass
class ScenarioConfig:
    n_sectors: int = 3
    pixels_per_sector: int = 1000
    wall_classes: tuple[str, ...] = ("Sun-dried bricks", "Cement blocks", "Concrete")
    roof_classes: tuple[str, ...] = ("Iron Sheets", "Tiles")
    rural_fraction: float = 0.0
    noise: float = 0.0
    coverage: float = 0.6
    footprint_miss: float = 0.1
    signal: float = 0.6
    epochs: int = 200
    learning_rate: float = 0.01


@dataclass
class SectorTruth:
    sector_id: str
    grid_shape: tuple[int, int]
    valid: np.ndarray
    pixels: np.ndarray  # (N, 2) planted building cells, row-major
    classes: dict[str, np.ndarray]  # indicator -> class index per planted pixel
    footprint: np.ndarray
    built_prob: np.ndarray
    bands: dict[str, np.ndarray]
    gt_rows: list[tuple[int, int, str, float]]


@dataclass
class Scenario:
    seed: int
    config: ScenarioConfig
    census: list[CensusRecord]
    constraints: list[ConstraintSet]
    sectors: list[SectorTruth]
    hierarchy: list[tuple[str, str, str]] = field(default_factory=list)

    def targets(self, sector_id: str) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for cs in self.constraints:
            if cs.sector_id == sector_id:
                for ind, counts in cs.pixel_counts.items():
                    d = out.setdefault(ind, {})
                    for c, n in counts.items():
                        d[c] = d.get(c, 0) + n
        return out


def _shares(rng: np.random.Generator, names: tuple[str, ...]) -> dict[str, float]:
    raw = rng.dirichlet(np.full(len(names), 4.0))
    vals = [round(float(v), 3) for v in raw]
    vals[-1] = round(1.0 - sum(vals[:-1]), 3)
    return dict(zip(names, vals))


def _make_census(rng: np.random.Generator, sid: str, cfg: ScenarioConfig, tables) -> CensusRecord:
    hsize = float(rng.uniform(3.5, 5.0))
    walls = _shares(rng, cfg.wall_classes)
    roof = _shares(rng, cfg.roof_classes)

    def record(households: int) -> CensusRecord:
        pop = int(round(households * hsize))
        rural = int(round(pop * cfg.rural_fraction))
        return CensusRecord(sid, pop - rural, rural, households, walls, roof)

    # scale households until the derived pixel total is close to the request
    households = max(1, int(round(cfg.pixels_per_sector / 0.6)))
    for _ in range(4):
        n = sum(cs.total_pixels for cs in derive_constraints(record(households), tables))
        if n == cfg.pixels_per_sector or n == 0:
            break
        households = max(1, int(round(households * cfg.pixels_per_sector / n)))
    return record(households)


def generate(seed: int = 0, config: ScenarioConfig | None = None) -> Scenario:
    cfg = config or ScenarioConfig()
    rng = np.random.default_rng(seed)
    tables = load_tables()
    q, _ = np.linalg.qr(rng.normal(size=(len(BAND_NAMES), len(LATENT_INDICATORS))))
    directions = {ind: q[:, c] for c, ind in enumerate(LATENT_INDICATORS)}
    base = rng.uniform(5.0, 7.0, size=len(BAND_NAMES))

    used = {"roof": cfg.roof_classes, "wall": cfg.wall_classes, "height": CLASSES["height"]}
    position = {ind: {CLASSES[ind].index(c): r for r, c in enumerate(c for c in CLASSES[ind] if c in used[ind])}
                for ind in LATENT_INDICATORS}

    census, constraints, sectors = [], [], []
    for i in range(cfg.n_sectors):
        sid = f"S{i + 1:02d}"
        rec = _make_census(rng, sid, cfg, tables)
        urban, rural = derive_constraints(rec, tables)
        census.append(rec)
        constraints += [urban, rural]
        targets = {ind: [urban.pixel_counts[ind].get(c, 0) + rural.pixel_counts[ind].get(c, 0)
                         for c in CLASSES[ind]] for ind in LATENT_INDICATORS}
        n = sum(targets["wall"])

        side = int(math.ceil(math.sqrt(n / 0.6 * 4 / math.pi))) + 2
        rr, cc = np.mgrid[0:side, 0:side]
        centre = (side - 1) / 2
        valid = (rr - centre) ** 2 + (cc - centre) ** 2 <= (side / 2) ** 2
        flat_valid = np.flatnonzero(valid.ravel())
        chosen = np.sort(rng.choice(flat_valid, size=n, replace=False))
        pixels = np.stack([chosen // side, chosen % side], axis=1)

        classes = {}
        for ind in LATENT_INDICATORS:
            labels = np.repeat(np.arange(len(CLASSES[ind])), targets[ind])
            classes[ind] = rng.permutation(labels)

        building = np.zeros(side * side, dtype=bool)
        building[chosen] = True
        prob = np.where(building, rng.uniform(0.6, 1.0, side * side), rng.uniform(0.0, 0.5, side * side))
        prob = np.where(valid.ravel(), prob, np.nan).reshape(side, side)
        missed = rng.random(n) < cfg.footprint_miss
        foot = np.zeros(side * side, dtype=bool)
        foot[chosen[~missed]] = True
        foot = foot.reshape(side, side)

        log_sig = np.tile(base - 1.5, (side * side, 1))
        sig = np.tile(base, (n, 1))
        for ind in LATENT_INDICATORS:
            # position among the scenario's classes, shared by every sector
            ranks = np.array([position[ind][h] for h in classes[ind]], dtype=np.float64)
            sig += cfg.signal * ranks[:, None] * directions[ind][None, :]
        log_sig[chosen] = sig
        log_sig += cfg.noise * rng.normal(size=log_sig.shape)
        bands = {}
        for b, name in enumerate(BAND_NAMES):
            arr = np.exp(log_sig[:, b]).reshape(side, side)
            bands[name] = np.where(valid, arr, np.nan)

        covered = np.flatnonzero(rng.random(n) < cfg.coverage)
        gt_rows = []
        for j in covered:
            roof = CLASSES["roof"][classes["roof"][j]]
            wall = CLASSES["wall"][classes["wall"][j]]
            options = HEIGHT_RANGES[CLASSES["height"][classes["height"][j]]]
            _, height_m = options[int(rng.integers(len(options)))]
            gt_rows.append((int(pixels[j, 0]), int(pixels[j, 1]), f"{roof}|{wall}", height_m))

        sectors.append(SectorTruth(sid, (side, side), valid, pixels, classes, foot, prob, bands, gt_rows))

    hierarchy = [(s.sector_id, f"D{i // 2 + 1}", f"P{i // 4 + 1}") for i, s in enumerate(sectors)]
    return Scenario(seed, cfg, census, constraints, sectors, hierarchy)


def write_bundle(scenario: Scenario, out: str | Path) -> Path:
    """Write every input file the CLI consumes, plus ``truth.csv``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_census(scenario.census, out / "census.csv")
    tables_dir = out / "tables"
    tables_dir.mkdir(exist_ok=True)
    for name in TABLE_FILES.values():
        with resources.as_file(resources.files("ccc") / "data" / name) as p:
            shutil.copyfile(p, tables_dir / name)
    write_constraints(scenario.constraints, out / "constraints.csv")

    for s in scenario.sectors:
        g = out / "grids" / s.sector_id
        g.mkdir(parents=True, exist_ok=True)
        write_ascii_grid(AsciiGrid(np.where(s.valid, s.footprint.astype(float), np.nan)), g / "footprint.asc")
        write_ascii_grid(AsciiGrid(s.built_prob), g / "built_prob.asc")
        b = out / "bands" / s.sector_id
        b.mkdir(parents=True, exist_ok=True)
        for name, arr in s.bands.items():
            write_ascii_grid(AsciiGrid(arr), b / f"{name}.asc")

    with open(out / "gt.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sector_id", "row", "col", "building_type_label", "height_m"])
        for s in scenario.sectors:
            for r, c, label, h in s.gt_rows:
                w.writerow([s.sector_id, r, c, label, repr(h)])

    labels = sorted({row[2] for s in scenario.sectors for row in s.gt_rows})
    maps = out / "mappings"
    maps.mkdir(exist_ok=True)
    write_mapping_csv({l: frozenset([l.split("|")[0]]) for l in labels}, "roof", maps / "mapping_roof.csv")
    write_mapping_csv({l: frozenset([l.split("|")[1]]) for l in labels}, "wall", maps / "mapping_wall.csv")
    with resources.as_file(resources.files("ccc") / "data" / "mapping_height.csv") as p:
        shutil.copyfile(p, maps / "mapping_height.csv")

    with open(out / "hierarchy.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sector_id", "district", "province"])
        w.writerows(scenario.hierarchy)

    with open(out / "truth.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sector_id", "row", "col", *LATENT_INDICATORS])
        for s in scenario.sectors:
            for j, (r, c) in enumerate(s.pixels):
                w.writerow([s.sector_id, int(r), int(c), *(CLASSES[i][s.classes[i][j]] for i in LATENT_INDICATORS)])

    cfg = scenario.config
    (out / "train.toml").write_text(
        f"epochs = {cfg.epochs}\nseed = {scenario.seed}\nlearning_rate = {cfg.learning_rate!r}\n", encoding="utf-8"
    )
    return out


__all__ = ["ScenarioConfig", "Scenario", "SectorTruth", "generate", "write_bundle"]
