"""Per-sector feature matrix: log-shifted, z-scored bands plus location."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataIntegrityError, SchemaError
from .rasters import read_ascii_grid
from .selection import PixelSet

BAND_NAMES = ("VV", "VH", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B11", "B12")
COLUMN_NAMES = BAND_NAMES + ("row_norm", "col_norm")
N_FEATURES = len(COLUMN_NAMES)

SIGMA_FLOOR = 1e-12


@dataclass
class FeatureMatrix:
    sector_id: str
    pixels: list[tuple[int, int]]
    values: np.ndarray
    column_names: tuple[str, ...] = COLUMN_NAMES

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.pixels), len(self.column_names)):
            raise DataIntegrityError(
                f"sector {self.sector_id}: feature shape {self.values.shape} does not match "
                f"{len(self.pixels)} pixels x {len(self.column_names)} columns"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataIntegrityError(f"sector {self.sector_id}: non-finite feature values")

    def __len__(self) -> int:
        return len(self.pixels)


def log_transform(values: np.ndarray) -> np.ndarray:
    """ln(v - min(v) + 1); total for negative (dB) inputs."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return v.copy()
    return np.log(v - v.min(axis=0) + 1.0)


def zscore(column: np.ndarray) -> np.ndarray:
    """Population z-score along axis 0; near-constant columns become zeros."""
    x = np.asarray(column, dtype=np.float64)
    if x.shape[0] == 0:
        return x.copy()
    mean = x.mean(axis=0)
    centered = x - mean
    sigma = np.sqrt(np.mean(centered**2, axis=0))
    safe = np.where(sigma < SIGMA_FLOOR, 1.0, sigma)
    out = centered / safe
    out = np.where(sigma < SIGMA_FLOOR, 0.0, out)
    # one more pass removes the residual rounding in the first moment
    return out - np.where(sigma < SIGMA_FLOOR, 0.0, out.mean(axis=0))


def assemble(bands: Mapping[str, np.ndarray], pixel_set: PixelSet, nodata: float | None = None) -> FeatureMatrix:
    """Feature rows for ``pixel_set`` from full-grid band arrays keyed by band name."""
    missing = [b for b in BAND_NAMES if b not in bands]
    if missing:
        raise DataIntegrityError(f"sector {pixel_set.sector_id}: missing bands {missing}")
    idx = pixel_set.as_array()
    n = idx.shape[0]
    raw = np.empty((n, len(BAND_NAMES)))
    for k, name in enumerate(BAND_NAMES):
        grid = np.asarray(bands[name], dtype=np.float64)
        if n and (idx[:, 0].max() >= grid.shape[0] or idx[:, 1].max() >= grid.shape[1]):
            raise DataIntegrityError(f"sector {pixel_set.sector_id}: band {name} smaller than the pixel grid")
        col = grid[idx[:, 0], idx[:, 1]] if n else np.empty(0)
        bad = ~np.isfinite(col)
        if nodata is not None:
            bad |= col == nodata
        if bad.any():
            r, c = idx[np.flatnonzero(bad)[0]]
            raise DataIntegrityError(f"sector {pixel_set.sector_id}: no data in band {name} at pixel ({r}, {c})")
        raw[:, k] = col
    values = np.empty((n, N_FEATURES))
    values[:, : len(BAND_NAMES)] = zscore(log_transform(raw))
    values[:, len(BAND_NAMES):] = zscore(idx.astype(np.float64))
    return FeatureMatrix(pixel_set.sector_id, list(pixel_set.pixels), values)


def load_band_grids(sector_dir: str | Path) -> tuple[dict[str, np.ndarray], float]:
    sector_dir = Path(sector_dir)
    bands = {}
    nodata = None
    for name in BAND_NAMES:
        p = sector_dir / f"{name}.asc"
        if not p.exists():
            raise DataIntegrityError(f"missing band raster {p}")
        g = read_ascii_grid(p)
        bands[name] = np.where(g.valid_mask(), g.data, np.nan)
        nodata = g.nodata
    return bands, nodata


def bands_from_table(path: str | Path) -> dict[str, dict[str, np.ndarray]]:
    """Band grids per sector from a ``sector_id,row,col,VV,...,B12`` table."""
    cells: dict[str, list[list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("sector_id", "row", "col", *BAND_NAMES):
            if col not in (reader.fieldnames or []):
                raise SchemaError(f"{path}: missing column {col!r}")
        for r in reader:
            cells.setdefault(r["sector_id"], []).append(
                [float(r["row"]), float(r["col"])] + [float(r[b]) for b in BAND_NAMES]
            )
    out = {}
    for sector, rows in cells.items():
        arr = np.array(rows)
        rc = arr[:, :2].astype(int)
        shape = (rc[:, 0].max() + 1, rc[:, 1].max() + 1)
        grids = {}
        for k, name in enumerate(BAND_NAMES):
            g = np.full(shape, np.nan)
            g[rc[:, 0], rc[:, 1]] = arr[:, 2 + k]
            grids[name] = g
        out[sector] = grids
    return out


def write_features(fm: FeatureMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fm.column_names)
        for row in fm.values:
            w.writerow([repr(float(v)) for v in row])


def read_features(path: str | Path, sector_id: str, pixels: list[tuple[int, int]]) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != COLUMN_NAMES:
            raise SchemaError(f"{path}: header {header} does not match {COLUMN_NAMES}")
        values = np.array([[float(v) for v in row] for row in reader], dtype=np.float64)
    return FeatureMatrix(sector_id, pixels, values.reshape(-1, N_FEATURES))
