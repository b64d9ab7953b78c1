"""Pick building-presence pixels so their count matches the constraint.

Footprint cells are trusted first. When they fall short, the most probable
non-footprint cells are added; when they overshoot, the least probable
footprint cells are dropped. Sorting once gives the same set a descending
(or ascending) threshold sweep would stop at, with ties resolved in
row-major order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, SchemaError
from .rasters import PixelGrid


@dataclass
class PixelSet:
    sector_id: str
    pixels: list[tuple[int, int]]
    threshold_used: float

    def __len__(self) -> int:
        return len(self.pixels)

    def as_array(self) -> np.ndarray:
        return np.array(self.pixels, dtype=np.int64).reshape(-1, 2)


def _ranked(flat_idx: np.ndarray, prob: np.ndarray) -> np.ndarray:
    # descending probability, row-major index breaks ties
    order = np.lexsort((flat_idx, -prob[flat_idx]))
    return flat_idx[order]


def select_pixels(grid: PixelGrid, n_constraint: int) -> PixelSet:
    valid = grid.valid.ravel()
    prob = np.where(valid, grid.built_probability.ravel(), -np.inf)
    foot = grid.footprint_mask.ravel() & valid
    n_valid = int(valid.sum())
    if n_constraint < 0:
        raise InfeasibleError(f"sector {grid.sector_id}: negative constraint {n_constraint}")
    if n_constraint > n_valid:
        raise InfeasibleError(
            f"sector {grid.sector_id}: need {n_constraint} pixels but only {n_valid} valid cells "
            f"(deficit {n_constraint - n_valid})"
        )
    foot_idx = _ranked(np.flatnonzero(foot), prob)
    n_bldg = foot_idx.size
    if n_bldg >= n_constraint:
        chosen = foot_idx[:n_constraint]
        last = chosen[-1] if n_constraint else None
    else:
        extra = _ranked(np.flatnonzero(valid & ~foot), prob)[: n_constraint - n_bldg]
        chosen = np.concatenate([foot_idx, extra])
        last = extra[-1]
    ncols = grid.shape[1]
    pixels = [(int(i // ncols), int(i % ncols)) for i in chosen]
    threshold = float(prob[last]) if last is not None else 1.0
    return PixelSet(grid.sector_id, pixels, threshold)


def write_pixel_sets(sets: list[PixelSet], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sector_id", "row", "col", "threshold"])
        for ps in sets:
            for r, c in ps.pixels:
                w.writerow([ps.sector_id, r, c, repr(ps.threshold_used)])


def read_pixel_sets(path: str | Path) -> dict[str, PixelSet]:
    out: dict[str, PixelSet] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("sector_id", "row", "col"):
            if col not in (reader.fieldnames or []):
                raise SchemaError(f"{path}: missing column {col!r}")
        for r in reader:
            ps = out.setdefault(r["sector_id"], PixelSet(r["sector_id"], [], float(r.get("threshold") or "nan")))
            ps.pixels.append((int(r["row"]), int(r["col"])))
    return out
