"""Census records and conditional tables to integer pixel-count constraints.

Every probabilistic split goes through :func:`apportion` (largest remainder),
so class totals are conserved exactly down the wall -> macro -> height chain.
Arithmetic on shares is done with :class:`fractions.Fraction` to keep the
rounding independent of float noise.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from .classes import CLASSES, HEIGHT_CLASSES, MACRO_CLASSES, SETTLEMENT_TYPES
from .errors import DegenerateInputError, SchemaError, ValidationError

SHARE_TOL = 1e-9
#: 10 m grid pixel (100 m^2) over a 60 m^2 building footprint.
PIXELS_PER_BUILDING = Fraction(60, 100)

TABLE_KINDS = ("wall_macro", "macro_height", "height_dwellings")
TABLE_FILES = {
    "wall_macro": "cond_wall_macro.csv",
    "macro_height": "cond_macro_height.csv",
    "height_dwellings": "cond_height_dwellings.csv",
}


def _check_shares(shares: Mapping[str, float] | Sequence[float], what: str) -> None:
    values = list(shares.values()) if isinstance(shares, Mapping) else list(shares)
    if any(not math.isfinite(v) or v < 0 for v in values):
        raise ValidationError(f"{what}: shares must be finite and non-negative")
    total = math.fsum(values)
    if abs(total - 1.0) > SHARE_TOL:
        raise ValidationError(f"{what}: shares sum to {total!r}, expected 1")


def _frac(x: float | Fraction | int) -> Fraction:
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    # repr gives the shortest decimal that round-trips, i.e. the value as written in the CSV
    return Fraction(repr(float(x)))


def round_half_up(x: float | Fraction) -> int:
    return math.floor(_frac(x) + Fraction(1, 2))


@dataclass(frozen=True)
class CensusRecord:
    sector_id: str
    urban_population: int
    rural_population: int
    private_households: int
    wall_shares: dict[str, float]
    roof_shares: dict[str, float]

    def __post_init__(self):
        if min(self.urban_population, self.rural_population) < 0:
            raise ValidationError(f"sector {self.sector_id}: negative population")
        if self.private_households < 1:
            raise DegenerateInputError(
                f"sector {self.sector_id}: private_households must be >= 1, got {self.private_households}"
            )
        _check_shares(self.wall_shares, f"sector {self.sector_id} wall")
        _check_shares(self.roof_shares, f"sector {self.sector_id} roof")

    @property
    def population(self) -> int:
        return self.urban_population + self.rural_population


@dataclass(frozen=True)
class ConditionalRow:
    source: str
    settlement_type: str
    target: str
    probability: float
    dwellings_per_building: int | None = None


@dataclass(frozen=True)
class ConditionalTable:
    kind: str
    rows: tuple[ConditionalRow, ...]

    def __post_init__(self):
        if self.kind not in TABLE_KINDS:
            raise ValidationError(f"unknown conditional table kind {self.kind!r}")
        groups: dict[tuple[str, str], list[float]] = defaultdict(list)
        for row in self.rows:
            if row.settlement_type not in (*SETTLEMENT_TYPES, "any"):
                raise ValidationError(f"{self.kind}: bad settlement_type {row.settlement_type!r}")
            if not 0.0 <= row.probability <= 1.0:
                raise ValidationError(f"{self.kind}: probability {row.probability} outside [0, 1]")
            if self.kind == "height_dwellings":
                if row.dwellings_per_building is None or row.dwellings_per_building < 1:
                    raise ValidationError(
                        f"{self.kind}: row {row.source}->{row.target} needs dwellings_per_building >= 1"
                    )
            groups[(row.source, row.settlement_type)].append(row.probability)
        for (source, stype), probs in groups.items():
            if abs(math.fsum(probs) - 1.0) > SHARE_TOL:
                raise ValidationError(
                    f"{self.kind}: probabilities for ({source}, {stype}) sum to {math.fsum(probs)!r}"
                )

    def lookup(self, source: str, settlement_type: str) -> list[ConditionalRow]:
        """Rows for ``source`` under ``settlement_type``, falling back to ``any``."""
        exact = [r for r in self.rows if r.source == source and r.settlement_type == settlement_type]
        if exact:
            return exact
        generic = [r for r in self.rows if r.source == source and r.settlement_type == "any"]
        if generic:
            return generic
        raise SchemaError(f"{self.kind}: no conditional rows for {source!r} ({settlement_type})")


class ConditionalTables(NamedTuple):
    wall_macro: ConditionalTable
    macro_height: ConditionalTable
    height_dwellings: ConditionalTable


@dataclass
class ConstraintSet:
    sector_id: str
    settlement_type: str
    dwelling_counts: dict[str, dict[str, int]]
    building_counts: dict[str, dict[str, int]]
    pixel_counts: dict[str, dict[str, int]]
    total_dwellings: int
    total_buildings: int
    household_size: float = field(default=float("nan"))

    @property
    def total_pixels(self) -> int:
        return sum(self.pixel_counts["wall"].values())


def compute_household_size(population: int, households: int, sector_id: str = "?") -> float:
    if households < 1:
        raise DegenerateInputError(f"sector {sector_id}: household count must be >= 1, got {households}")
    return population / households


def compute_dwellings(urban_pop: float, rural_pop: float, household_size: float) -> tuple[float, float]:
    if not household_size > 0:
        raise DegenerateInputError(f"household size must be positive, got {household_size}")
    return urban_pop / household_size, rural_pop / household_size


def apportion(total: int, shares: Sequence[float | Fraction]) -> list[int]:
    """Split ``total`` into integers proportional to ``shares`` (largest remainder).

    Ties on the remainder go to the lower index.

    >>> apportion(10, [0.475, 0.475, 0.05])
    [5, 5, 0]
    """
    if total < 0 or int(total) != total:
        raise ValidationError(f"total must be a non-negative integer, got {total}")
    shares_f = [_frac(s) for s in shares]
    if not shares_f:
        if total:
            raise ValidationError("cannot apportion a positive total over zero classes")
        return []
    if any(s < 0 for s in shares_f):
        raise ValidationError("shares must be non-negative")
    mass = sum(shares_f)
    if abs(mass - 1) > Fraction(SHARE_TOL):
        raise ValidationError(f"shares sum to {float(mass)!r}, expected 1")
    return _largest_remainder(int(total), shares_f)


def _largest_remainder(total: int, weights: Sequence[Fraction]) -> list[int]:
    mass = sum(weights)
    if total == 0 or mass == 0:
        if total and mass == 0:
            raise ValidationError("cannot apportion a positive total over zero weights")
        return [0] * len(weights)
    quotas = [total * w / mass for w in weights]
    counts = [math.floor(q) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def apportion_weights(total: int, weights: Sequence[Fraction | float]) -> list[int]:
    """Largest-remainder split over unnormalized non-negative weights."""
    return _largest_remainder(int(total), [_frac(w) for w in weights])


def buildings_to_pixels(n_buildings: int) -> int:
    if n_buildings < 0:
        raise ValidationError("building count must be non-negative")
    return round_half_up(n_buildings * PIXELS_PER_BUILDING)


def pixels_to_buildings(n_pixels: int) -> int:
    return round_half_up(n_pixels / PIXELS_PER_BUILDING)


def dwellings_to_buildings(n_dwellings: int, rows: Sequence[ConditionalRow]) -> int:
    """Buildings needed for ``n_dwellings`` of one height class.

    Dwellings are split over building types by largest remainder, divided by
    each type's dwellings per building, and the class total is rounded up so
    every dwelling is housed.
    """
    typed = apportion(n_dwellings, [r.probability for r in rows])
    real = sum(Fraction(k, r.dwellings_per_building) for k, r in zip(typed, rows))
    return math.ceil(real)


def _ordered(keys: Iterable[str], canonical: Sequence[str]) -> list[str]:
    keys = list(dict.fromkeys(keys))
    known = [c for c in canonical if c in keys]
    return known + [k for k in keys if k not in canonical]


def _split_settlement(census: CensusRecord, tables: ConditionalTables, stype: str, dwellings: int,
                      household_size: float) -> ConstraintSet:
    wall_names = list(census.wall_shares)
    wall_dw = dict(zip(wall_names, apportion(dwellings, [census.wall_shares[w] for w in wall_names])))

    macro_dw: dict[str, int] = defaultdict(int)
    for wall in wall_names:
        if census.wall_shares[wall] == 0 and wall_dw[wall] == 0:
            continue
        rows = tables.wall_macro.lookup(wall, stype)
        for row, n in zip(rows, apportion(wall_dw[wall], [r.probability for r in rows])):
            macro_dw[row.target] += n

    height_dw: dict[str, int] = defaultdict(int)
    for macro in list(macro_dw):
        rows = tables.macro_height.lookup(macro, stype)
        for row, n in zip(rows, apportion(macro_dw[macro], [r.probability for r in rows])):
            height_dw[row.target] += n

    # buildings per dwelling for each height class, in expectation
    def per_dwelling(height: str) -> Fraction:
        rows = tables.height_dwellings.lookup(height, stype)
        return sum(_frac(r.probability) / r.dwellings_per_building for r in rows)

    height_bldg = {h: dwellings_to_buildings(n, tables.height_dwellings.lookup(h, stype))
                   for h, n in height_dw.items()}
    total_buildings = sum(height_bldg.values())

    macro_mass: dict[str, Fraction] = {}
    for macro, n in macro_dw.items():
        rows = tables.macro_height.lookup(macro, stype)
        macro_mass[macro] = n * sum(_frac(r.probability) * per_dwelling(r.target) for r in rows)
    wall_mass: dict[str, Fraction] = {}
    for wall in wall_names:
        if wall_dw[wall] == 0:
            wall_mass[wall] = Fraction(0)
            continue
        rows = tables.wall_macro.lookup(wall, stype)
        wall_mass[wall] = wall_dw[wall] * sum(
            _frac(r.probability)
            * sum(_frac(h.probability) * per_dwelling(h.target) for h in tables.macro_height.lookup(r.target, stype))
            for r in rows
        )

    macro_names = _ordered([*MACRO_CLASSES, *macro_dw], MACRO_CLASSES)
    height_names = _ordered([*HEIGHT_CLASSES, *height_dw], HEIGHT_CLASSES)
    roof_names = list(census.roof_shares)

    def spread(names, mass):
        weights = [mass.get(n, Fraction(0)) for n in names]
        if total_buildings == 0:
            return dict.fromkeys(names, 0)
        return dict(zip(names, apportion_weights(total_buildings, weights)))

    buildings = {
        "roof": dict(zip(roof_names, apportion(total_buildings, [census.roof_shares[r] for r in roof_names]))),
        "wall": spread(wall_names, wall_mass),
        "height": {h: height_bldg.get(h, 0) for h in height_names},
        "macro": spread(macro_names, macro_mass),
    }
    dwell = {
        "wall": dict(wall_dw),
        "macro": {m: macro_dw.get(m, 0) for m in macro_names},
        "height": {h: height_dw.get(h, 0) for h in height_names},
    }

    pixels: dict[str, dict[str, int]] = {"wall": {w: buildings_to_pixels(n) for w, n in buildings["wall"].items()}}
    wall_total = sum(pixels["wall"].values())
    for indicator in ("roof", "height", "macro"):
        counts = buildings[indicator]
        names = list(counts)
        if total_buildings == 0:
            pixels[indicator] = dict.fromkeys(names, 0)
        else:
            pixels[indicator] = dict(zip(names, apportion_weights(wall_total, [counts[n] for n in names])))

    return ConstraintSet(
        sector_id=census.sector_id,
        settlement_type=stype,
        dwelling_counts=dwell,
        building_counts=buildings,
        pixel_counts={k: pixels[k] for k in ("roof", "wall", "height", "macro")},
        total_dwellings=dwellings,
        total_buildings=total_buildings,
        household_size=household_size,
    )


def derive_constraints(census: CensusRecord, tables: ConditionalTables) -> tuple[ConstraintSet, ConstraintSet]:
    """Urban and rural constraint sets for one sector."""
    h = compute_household_size(census.population, census.private_households, census.sector_id)
    for wall, share in census.wall_shares.items():
        if share > 0:
            for stype in SETTLEMENT_TYPES:
                tables.wall_macro.lookup(wall, stype)
    if census.population == 0:
        d_urban = d_rural = 0
    else:
        # exact form of population / household size
        d_urban = round_half_up(Fraction(census.urban_population * census.private_households, census.population))
        d_rural = round_half_up(Fraction(census.rural_population * census.private_households, census.population))
    return (
        _split_settlement(census, tables, "urban", d_urban, h),
        _split_settlement(census, tables, "rural", d_rural, h),
    )


# --- I/O -------------------------------------------------------------------


def read_census(path: str | Path) -> list[CensusRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("sector_id", "urban_pop", "rural_pop", "households"):
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        walls = [c for c in header if c.startswith("wall_")]
        roofs = [c for c in header if c.startswith("roof_")]
        if not walls or not roofs:
            raise SchemaError(f"{path}: need wall_<class> and roof_<class> columns")
        records = []
        for row in reader:
            records.append(
                CensusRecord(
                    sector_id=row["sector_id"],
                    urban_population=int(row["urban_pop"]),
                    rural_population=int(row["rural_pop"]),
                    private_households=int(row["households"]),
                    wall_shares={c[5:]: float(row[c]) for c in walls},
                    roof_shares={c[5:]: float(row[c]) for c in roofs},
                )
            )
    return records


def write_census(records: Sequence[CensusRecord], path: str | Path) -> None:
    if not records:
        raise ValidationError("no census records to write")
    walls = list(records[0].wall_shares)
    roofs = list(records[0].roof_shares)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sector_id", "urban_pop", "rural_pop", "households",
                         *(f"wall_{w}" for w in walls), *(f"roof_{r}" for r in roofs)])
        for rec in records:
            writer.writerow([rec.sector_id, rec.urban_population, rec.rural_population, rec.private_households,
                             *(repr(rec.wall_shares[w]) for w in walls), *(repr(rec.roof_shares[r]) for r in roofs)])


def read_table(path: str | Path, kind: str) -> ConditionalTable:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("source", "settlement_type", "target", "probability"):
            if col not in (reader.fieldnames or []):
                raise SchemaError(f"{path}: missing column {col!r}")
        for r in reader:
            dpb = r.get("dwellings_per_building")
            rows.append(ConditionalRow(r["source"], r["settlement_type"], r["target"], float(r["probability"]),
                                       int(dpb) if dpb not in (None, "") else None))
    return ConditionalTable(kind, tuple(rows))


def write_table(table: ConditionalTable, path: str | Path) -> None:
    with_dpb = table.kind == "height_dwellings"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["source", "settlement_type", "target", "probability"]
                        + (["dwellings_per_building"] if with_dpb else []))
        for r in table.rows:
            writer.writerow([r.source, r.settlement_type, r.target, repr(r.probability)]
                            + ([r.dwellings_per_building] if with_dpb else []))


def load_tables(directory: str | Path | None = None) -> ConditionalTables:
    """Conditional tables from ``directory``, or the bundled expert tables."""
    loaded = {}
    for kind, name in TABLE_FILES.items():
        if directory is None:
            with resources.as_file(resources.files("ccc") / "data" / name) as p:
                loaded[kind] = read_table(p, kind)
        else:
            p = Path(directory) / name
            if not p.exists():
                raise SchemaError(f"missing conditional table {p}")
            loaded[kind] = read_table(p, kind)
    return ConditionalTables(**loaded)


CONSTRAINT_COLUMNS = ["sector_id", "settlement_type", "indicator", "class", "dwellings", "buildings", "pixels"]


def write_constraints(sets: Iterable[ConstraintSet], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CONSTRAINT_COLUMNS)
        for cs in sets:
            for indicator in ("roof", "wall", "height", "macro"):
                dw = cs.dwelling_counts.get(indicator, {})
                for name, n_b in cs.building_counts[indicator].items():
                    writer.writerow([cs.sector_id, cs.settlement_type, indicator, name,
                                     dw.get(name, ""), n_b, cs.pixel_counts[indicator][name]])


def read_pixel_targets(path: str | Path) -> dict[str, dict[str, dict[str, int]]]:
    """``{sector: {indicator: {class: pixels}}}`` summed over settlement types."""
    out: dict[str, dict[str, dict[str, int]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in CONSTRAINT_COLUMNS:
            if col not in (reader.fieldnames or []):
                raise SchemaError(f"{path}: missing column {col!r}")
        for r in reader:
            ind = out.setdefault(r["sector_id"], {}).setdefault(r["indicator"], {})
            ind[r["class"]] = ind.get(r["class"], 0) + int(r["pixels"])
    return out


def read_settlement_pixels(path: str | Path) -> dict[str, dict[str, int]]:
    """Wall pixel totals per sector and settlement type."""
    out: dict[str, dict[str, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            if r["indicator"] == "wall":
                d = out.setdefault(r["sector_id"], {})
                d[r["settlement_type"]] = d.get(r["settlement_type"], 0) + int(r["pixels"])
    return out


def class_targets(targets: Mapping[str, int], indicator: str) -> list[int]:
    """Target vector in canonical class order for ``indicator``."""
    unknown = set(targets) - set(CLASSES[indicator])
    if unknown:
        raise SchemaError(f"unknown {indicator} classes in constraints: {sorted(unknown)}")
    return [int(targets.get(c, 0)) for c in CLASSES[indicator]]
