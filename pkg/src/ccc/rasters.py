"""ESRI ASCII grid reading/writing and the per-sector pixel grid."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError, ValidationError

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
DEFAULT_NODATA = -9999.0


@dataclass
class AsciiGrid:
    data: np.ndarray  # (nrows, ncols), row 0 is the northern edge
    xllcorner: float = 0.0
    yllcorner: float = 0.0
    cellsize: float = 10.0
    nodata: float = DEFAULT_NODATA

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.data) & (self.data != self.nodata)


def read_ascii_grid(path: str | Path) -> AsciiGrid:
    header: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines) and lines[i].strip() and lines[i].split()[0].lower() in HEADER_KEYS:
        key, value = lines[i].split()[:2]
        header[key.lower()] = float(value)
        i += 1
    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise SchemaError(f"{path}: missing {key} in grid header")
    nrows, ncols = int(header["nrows"]), int(header["ncols"])
    values = np.array(" ".join(lines[i:]).split(), dtype=np.float64)
    if values.size != nrows * ncols:
        raise SchemaError(f"{path}: expected {nrows * ncols} values, found {values.size}")
    return AsciiGrid(
        data=values.reshape(nrows, ncols),
        xllcorner=header.get("xllcorner", 0.0),
        yllcorner=header.get("yllcorner", 0.0),
        cellsize=header["cellsize"],
        nodata=header.get("nodata_value", DEFAULT_NODATA),
    )


def write_ascii_grid(grid: AsciiGrid, path: str | Path) -> None:
    nrows, ncols = grid.shape
    data = np.where(np.isfinite(grid.data), grid.data, grid.nodata)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"ncols {ncols}\nnrows {nrows}\n")
        fh.write(f"xllcorner {grid.xllcorner!r}\nyllcorner {grid.yllcorner!r}\n")
        fh.write(f"cellsize {grid.cellsize!r}\nNODATA_value {grid.nodata!r}\n")
        for row in data:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


@dataclass
class PixelGrid:
    """Footprint union and built-area probability for one sector."""

    sector_id: str
    footprint_mask: np.ndarray  # bool (nrows, ncols)
    built_probability: np.ndarray  # float, NaN marks cells outside the sector
    xllcorner: float = 0.0
    yllcorner: float = 0.0
    cellsize: float = 10.0

    def __post_init__(self):
        self.footprint_mask = np.asarray(self.footprint_mask, dtype=bool)
        self.built_probability = np.asarray(self.built_probability, dtype=np.float64)
        if self.footprint_mask.shape != self.built_probability.shape:
            raise ValidationError(
                f"sector {self.sector_id}: footprint {self.footprint_mask.shape} and probability "
                f"{self.built_probability.shape} grids differ"
            )
        p = self.built_probability[self.valid]
        if p.size and (p.min() < 0 or p.max() > 1):
            raise ValidationError(f"sector {self.sector_id}: built probability outside [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.footprint_mask.shape

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.built_probability)


def load_pixel_grid(sector_dir: str | Path, sector_id: str | None = None) -> PixelGrid:
    """Read ``footprint.asc`` and ``built_prob.asc`` from a sector directory."""
    sector_dir = Path(sector_dir)
    fp = read_ascii_grid(sector_dir / "footprint.asc")
    bp = read_ascii_grid(sector_dir / "built_prob.asc")
    prob = np.where(bp.valid_mask(), bp.data, np.nan)
    mask = fp.valid_mask() & (fp.data > 0.5)
    return PixelGrid(sector_id or sector_dir.name, mask & np.isfinite(prob), prob,
                     bp.xllcorner, bp.yllcorner, bp.cellsize)


def pixel_grids_from_table(path: str | Path) -> dict[str, PixelGrid]:
    """Build grids from a ``sector_id,row,col,footprint,built_prob`` table.

    Cells absent from the table are outside the sector.
    """
    cells: dict[str, list[tuple[int, int, bool, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("sector_id", "row", "col", "footprint", "built_prob"):
            if col not in (reader.fieldnames or []):
                raise SchemaError(f"{path}: missing column {col!r}")
        for r in reader:
            cells.setdefault(r["sector_id"], []).append(
                (int(r["row"]), int(r["col"]), float(r["footprint"]) > 0.5, float(r["built_prob"]))
            )
    grids = {}
    for sector, rows in cells.items():
        nr = max(r[0] for r in rows) + 1
        nc = max(r[1] for r in rows) + 1
        mask = np.zeros((nr, nc), dtype=bool)
        prob = np.full((nr, nc), np.nan)
        for i, j, f, p in rows:
            mask[i, j] = f
            prob[i, j] = p
        grids[sector] = PixelGrid(sector, mask, prob)
    return grids
