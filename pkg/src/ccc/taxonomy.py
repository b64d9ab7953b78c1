"""Per-pixel macro-taxonomy labels from wall assignments.

Within each wall-class group the pixel count is split over the group's
macro classes by largest remainder; pixels, ordered by their wall-channel
latent, then fill those quotas in table row order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .census import ConditionalTable, apportion
from .classes import MACRO_CLASSES, WALL_CLASSES
from .errors import SchemaError


@dataclass
class MacroAllocation:
    sector_id: str
    settlement_type: str
    quotas: dict[str, list[tuple[str, int]]]  # wall class -> [(macro class, pixels)]
    labels: np.ndarray  # macro class index per pixel, into MACRO_CLASSES

    def counts(self) -> dict[str, int]:
        return {m: int((self.labels == i).sum()) for i, m in enumerate(MACRO_CLASSES)}


def assign_macro(wall_labels, wall_latent, settlement_type: str, table: ConditionalTable,
                 sector_id: str = "") -> MacroAllocation:
    wall_labels = np.asarray(wall_labels, dtype=np.int64)
    wall_latent = np.asarray(wall_latent, dtype=np.float64)
    macro_index = {m: i for i, m in enumerate(MACRO_CLASSES)}
    labels = np.full(wall_labels.size, -1, dtype=np.int64)
    quotas: dict[str, list[tuple[str, int]]] = {}
    for w, wall in enumerate(WALL_CLASSES):
        members = np.flatnonzero(wall_labels == w)
        if members.size == 0:
            continue
        rows = table.lookup(wall, settlement_type)
        unknown = [r.target for r in rows if r.target not in macro_index]
        if unknown:
            raise SchemaError(f"unknown macro classes {unknown} for wall {wall!r}")
        counts = apportion(int(members.size), [r.probability for r in rows])
        quotas[wall] = [(r.target, n) for r, n in zip(rows, counts)]
        ordered = members[np.lexsort((members, wall_latent[members]))]
        labels[ordered] = np.repeat([macro_index[r.target] for r in rows], counts)
    return MacroAllocation(sector_id, settlement_type, quotas, labels)
