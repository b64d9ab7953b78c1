"""Figures written next to the CSV outputs of the CLI."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .classes import CLASSES, INDICATORS, LATENT_INDICATORS  # noqa: E402
from .metrics import IndicatorScore  # noqa: E402
from .training import EpochRecord  # noqa: E402

# fixed metadata keeps PNG bytes reproducible
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_losses(records: Sequence[EpochRecord], path, selected_epoch: int | None = None) -> Path:
    """Loss curves on the left, per-indicator precision on the right."""
    fig, (ax_l, ax_p) = plt.subplots(1, 2, figsize=(10, 4))
    epochs = [r.epoch for r in records]
    ax_l.plot(epochs, [r.reconstruction for r in records], label="reconstruction")
    ax_l.plot(epochs, [r.clustering for r in records], label="clustering")
    ax_l.set_yscale("log")
    ax_l.set_xlabel("epoch")
    ax_l.set_ylabel("loss")
    for ind in LATENT_INDICATORS:
        ys = [r.precision.get(ind) for r in records]
        if any(y is not None for y in ys):
            ax_p.plot(epochs, [float("nan") if y is None else y for y in ys], label=ind)
        held = [r.heldout_precision.get(ind) for r in records]
        if any(y is not None for y in held):
            ax_p.plot(epochs, [float("nan") if y is None else y for y in held], linestyle="--",
                      label=f"{ind} (held out)")
    ax_p.set_ylim(0, 1.02)
    ax_p.set_xlabel("epoch")
    ax_p.set_ylabel("modified precision")
    for ax in (ax_l, ax_p):
        if selected_epoch is not None:
            ax.axvline(selected_epoch, color="grey", linewidth=0.8)
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_report(rows: Sequence[tuple[str, str, IndicatorScore]], path) -> Path:
    """Grouped bars of modified precision per sector and indicator."""
    units = list(dict.fromkeys(sid for sid, _, _ in rows))
    fig, ax = plt.subplots(figsize=(max(5.0, 0.9 * len(units) + 2), 4))
    width = 0.8 / len(LATENT_INDICATORS)
    lookup = {(sid, ind): s for sid, ind, s in rows}
    for i, ind in enumerate(LATENT_INDICATORS):
        vals = []
        for u in units:
            s = lookup.get((u, ind))
            vals.append(s.precision if s is not None and s.precision is not None else 0.0)
        ax.bar([x + i * width for x in range(len(units))], vals, width, label=ind)
    ax.set_xticks([x + width for x in range(len(units))])
    ax.set_xticklabels(units, rotation=45, ha="right")
    ax.set_ylim(0, 1.02)
    ax.set_ylabel("modified precision")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_aggregate(rows: Sequence[dict], level: str, path) -> Path:
    """Stacked class shares per unit, one panel per indicator."""
    units = sorted({r["unit"] for r in rows if r["level"] == level})
    fig, axes = plt.subplots(1, len(INDICATORS), figsize=(4 * len(INDICATORS), 4))
    for ax, ind in zip(axes, INDICATORS):
        bottom = [0.0] * len(units)
        totals = [sum(r["pixels"] for r in rows if r["level"] == level and r["unit"] == u and r["indicator"] == ind)
                  for u in units]
        for c in CLASSES[ind]:
            vals = []
            for u, t in zip(units, totals):
                px = sum(r["pixels"] for r in rows
                         if r["level"] == level and r["unit"] == u and r["indicator"] == ind and r["class"] == c)
                vals.append(px / t if t else 0.0)
            if any(vals):
                ax.bar(units, vals, bottom=bottom, label=c)
                bottom = [b + v for b, v in zip(bottom, vals)]
        ax.set_title(ind)
        ax.set_ylim(0, 1.0)
        ax.tick_params(axis="x", rotation=45)
        ax.legend(fontsize=6)
    fig.tight_layout()
    return _save(fig, path)
