"""Overlap-aware precision against weak groundtruth labels.

A prediction counts as a true positive when its class lies in the set of
classes the pixel's groundtruth label is compatible with. Only covered
pixels (those with both a prediction and a mapped label) are scored.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .classes import CLASSES, LATENT_INDICATORS
from .clustering import GroundtruthOverlay
from .errors import MappingError, SchemaError, UndefinedMetricError, ValidationError

_RANGE = re.compile(r"^\s*([\[(])\s*([^,\s]+)\s*,\s*([^\])\s]+)\s*([\])])\s*$")


@dataclass(frozen=True)
class HeightRange:
    label: str
    low: float
    high: float
    low_closed: bool
    high_closed: bool

    @classmethod
    def parse(cls, label: str) -> "HeightRange":
        m = _RANGE.match(label)
        if not m:
            raise MappingError(f"cannot parse height range {label!r}")
        return cls(label, float(m.group(2)), float(m.group(3)), m.group(1) == "[", m.group(4) == "]")

    def __contains__(self, h: float) -> bool:
        lo_ok = h >= self.low if self.low_closed else h > self.low
        hi_ok = h <= self.high if self.high_closed else h < self.high
        return lo_ok and hi_ok


@dataclass
class LabelMapping:
    """``indicator -> {groundtruth label -> allowed classes}``."""

    sets: dict[str, dict[str, frozenset[str]]]
    height_ranges: list[HeightRange] = field(default_factory=list)

    def __post_init__(self):
        for indicator, table in self.sets.items():
            for label, allowed in table.items():
                if not allowed:
                    raise MappingError(f"{indicator}: label {label!r} maps to no classes")
                unknown = set(allowed) - set(CLASSES[indicator])
                if unknown:
                    raise MappingError(f"{indicator}: label {label!r} maps to unknown classes {sorted(unknown)}")
        if "height" in self.sets and not self.height_ranges:
            self.height_ranges = sorted((HeightRange.parse(l) for l in self.sets["height"]), key=lambda r: r.low)
        self._check_ranges()

    def _check_ranges(self) -> None:
        rs = self.height_ranges
        if not rs:
            return
        if rs[0].low != 0 or rs[0].low_closed or not math.isinf(rs[-1].high):
            raise MappingError("height ranges must cover (0, inf)")
        for a, b in zip(rs[:-1], rs[1:]):
            if a.high != b.low or a.high_closed == b.low_closed:
                raise MappingError(f"height ranges {a.label} and {b.label} overlap or leave a gap")

    def height_label(self, height_m: float) -> str:
        for r in self.height_ranges:
            if height_m in r:
                return r.label
        raise MappingError(f"height {height_m} m is outside every mapped range")

    def allowed(self, indicator: str, building_type: str | None, height_m: float | None) -> frozenset[str] | None:
        if indicator == "height":
            if height_m is None:
                return None
            return self.sets["height"][self.height_label(height_m)]
        if building_type is None:
            return None
        try:
            return self.sets[indicator][building_type]
        except KeyError:
            raise MappingError(f"{indicator}: no mapping for groundtruth label {building_type!r}") from None


def read_mapping_csv(path: str | Path) -> dict[str, frozenset[str]]:
    table: dict[str, set[str]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"gt_label", "target_class"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: need gt_label,target_class columns")
        for r in reader:
            table.setdefault(r["gt_label"], set()).add(r["target_class"])
    return {k: frozenset(v) for k, v in table.items()}


def write_mapping_csv(table: Mapping[str, frozenset[str]], indicator: str, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gt_label", "target_class"])
        for label, allowed in table.items():
            for c in CLASSES[indicator]:
                if c in allowed:
                    w.writerow([label, c])


def load_mappings(directory: str | Path | None = None) -> LabelMapping:
    """``mapping_{roof,wall,height}.csv`` from ``directory`` or the bundled tables."""
    sets = {}
    for indicator in LATENT_INDICATORS:
        name = f"mapping_{indicator}.csv"
        if directory is None:
            with resources.as_file(resources.files("ccc") / "data" / name) as p:
                sets[indicator] = read_mapping_csv(p)
        else:
            p = Path(directory) / name
            if not p.exists():
                raise SchemaError(f"missing label mapping {p}")
            sets[indicator] = read_mapping_csv(p)
    return LabelMapping(sets)


@dataclass(frozen=True)
class GroundtruthPoint:
    building_type: str | None
    height_m: float | None


def read_groundtruth(path: str | Path) -> dict[str, dict[tuple[int, int], GroundtruthPoint]]:
    out: dict[str, dict[tuple[int, int], GroundtruthPoint]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("sector_id", "row", "col", "building_type_label", "height_m"):
            if col not in (reader.fieldnames or []):
                raise SchemaError(f"{path}: missing column {col!r}")
        for r in reader:
            label = r["building_type_label"].strip() or None
            height = float(r["height_m"]) if r["height_m"].strip() else None
            out.setdefault(r["sector_id"], {})[(int(r["row"]), int(r["col"]))] = GroundtruthPoint(label, height)
    return out


def build_overlay(pixels: Sequence[tuple[int, int]], groundtruth: Mapping[tuple[int, int], GroundtruthPoint],
                  mapping: LabelMapping, indicator: str) -> GroundtruthOverlay:
    names = CLASSES[indicator]
    index = {c: i for i, c in enumerate(names)}
    sets: list[set[int] | None] = []
    for p in pixels:
        gt = groundtruth.get(tuple(p))
        allowed = mapping.allowed(indicator, gt.building_type, gt.height_m) if gt else None
        sets.append(None if allowed is None else {index[c] for c in allowed})
    return GroundtruthOverlay.from_sets(sets, len(names))


def hits(predictions, overlay: GroundtruthOverlay) -> np.ndarray:
    """Per covered pixel, whether its prediction is an allowed class."""
    pred = np.asarray(predictions, dtype=np.int64)
    cov = np.flatnonzero(overlay.covered)
    return overlay.allowed[cov, pred[cov]]


def modified_precision(predictions, overlay: GroundtruthOverlay) -> float:
    x = hits(predictions, overlay)
    if x.size == 0:
        raise UndefinedMetricError("no covered pixels; precision is undefined")
    return float(x.sum()) / x.size


def class_weights(sizes: Sequence[int], k: int, m: int) -> list[float]:
    """``m / (k * size)`` per class; empty classes get 0."""
    return [m / (k * s) if s > 0 else 0.0 for s in sizes]


def weighted_precision(per_class: Sequence[float], weights: Sequence[float]) -> float:
    if len(per_class) != len(weights):
        raise ValidationError("per-class precisions and weights differ in length")
    return float(sum(r * p for p, r in zip(per_class, weights) if r > 0))


@dataclass
class IndicatorScore:
    covered: int
    tp: int
    fp: int
    precision: float | None
    weighted_precision: float | None
    weights: list[float]


def score_indicator(predictions, overlay: GroundtruthOverlay) -> IndicatorScore:
    """Precision plus the class-balanced variant.

    Each class contributes ``TP_h / covered``; multiplying by the class
    weight (computed over covered pixels and the classes actually predicted)
    turns the sum into the mean per-class precision.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    k = overlay.allowed.shape[1]
    x = hits(pred, overlay)
    n = int(x.size)
    if n == 0:
        return IndicatorScore(0, 0, 0, None, None, [0.0] * k)
    cov_pred = pred[overlay.covered]
    sizes = np.bincount(cov_pred, minlength=k)
    tp_h = np.bincount(cov_pred, weights=x.astype(np.float64), minlength=k)
    k_used = int((sizes > 0).sum())
    r = class_weights(sizes.tolist(), k_used, n)
    tp = int(x.sum())
    return IndicatorScore(n, tp, n - tp, tp / n, weighted_precision((tp_h / n).tolist(), r), r)


REPORT_COLUMNS = ["sector_id", "indicator", "covered", "tp", "fp", "precision", "weighted_precision"]


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def write_report(rows: Sequence[tuple[str, str, IndicatorScore]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for sector, indicator, s in rows:
            w.writerow([sector, indicator, s.covered, s.tp, s.fp, _fmt(s.precision), _fmt(s.weighted_precision)])
