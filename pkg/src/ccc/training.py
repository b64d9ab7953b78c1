"""Joint training of the autoencoder and the constrained clustering.

Each epoch encodes every sector, re-fits the constrained clusters on each
latent channel, and takes one Adam step on the summed gradient of
reconstruction + clustering loss. Cluster centers and supervised targets
are constants inside the step; the flow solve is not differentiated.
"""

from __future__ import annotations

import configparser
import csv
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .autoencoder import (
    AdamState,
    Network,
    adam_step,
    backward,
    encode,
    forward,
    reconstruction_grad,
    reconstruction_loss,
)
from .classes import CLASSES, LATENT_INDICATORS
from .clustering import (
    AssignmentState,
    GroundtruthOverlay,
    clustering_grad,
    clustering_loss,
    fit,
    label_weights,
)
from .errors import NumericalError, ValidationError
from .features import FeatureMatrix
from .metrics import hits, score_indicator
from .parallel import ordered_map

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 200
    seed: int = 0
    fold_count: int = 5
    learning_rate: float = 1e-4
    beta1: float = 0.80
    beta2: float = 0.95
    eps: float = 1e-8
    fit_max_iter: int = 100
    fit_tol: float = 1e-6

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        """Flat ``key = value`` file (TOML-compatible subset)."""
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.read_string("[train]\n" + Path(path).read_text(encoding="utf-8"))
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for key, raw in parser["train"].items():
            if key not in kinds:
                raise ValidationError(f"{path}: unknown config key {key!r}")
            raw = raw.strip().strip("\"'")
            values[key] = int(raw) if kinds[key] in (int, "int") else float(raw)
        return cls(**values)


@dataclass
class SectorData:
    sector_id: str
    features: FeatureMatrix
    targets: dict[str, np.ndarray]  # indicator -> pixel targets in canonical class order
    overlays: dict[str, GroundtruthOverlay]
    settlement_type: str = "urban"

    def __post_init__(self):
        m = len(self.features)
        for ind in LATENT_INDICATORS:
            t = np.asarray(self.targets[ind], dtype=np.int64)
            if t.size != len(CLASSES[ind]):
                raise ValidationError(f"sector {self.sector_id}: {ind} targets need {len(CLASSES[ind])} entries")
            if t.sum() > m:
                raise ValidationError(
                    f"sector {self.sector_id}: {ind} targets sum to {t.sum()} for {m} pixels"
                )
            self.targets[ind] = t
            if ind not in self.overlays:
                self.overlays[ind] = GroundtruthOverlay.empty(m, t.size)

    @property
    def n_pixels(self) -> int:
        return len(self.features)

    @property
    def has_groundtruth(self) -> bool:
        return any(o.covered.any() for o in self.overlays.values())


@dataclass
class EpochRecord:
    epoch: int
    reconstruction: float
    clustering: float
    total: float
    precision: dict[str, float | None] = field(default_factory=dict)
    weighted_precision: dict[str, float | None] = field(default_factory=dict)
    heldout_precision: dict[str, float | None] = field(default_factory=dict)

    def mean_precision(self, heldout: bool = False) -> float | None:
        vals = [v for v in (self.heldout_precision if heldout else self.precision).values() if v is not None]
        return float(np.mean(vals)) if vals else None


def fit_sector(latent: np.ndarray, sector: SectorData, cfg: TrainConfig) -> dict[str, AssignmentState]:
    return {
        ind: fit(latent[:, c], sector.targets[ind], max_iter=cfg.fit_max_iter, tol=cfg.fit_tol)
        for c, ind in enumerate(LATENT_INDICATORS)
    }


def _pooled(hit_lists: dict[str, list[np.ndarray]]) -> dict[str, float | None]:
    out = {}
    for ind, parts in hit_lists.items():
        x = np.concatenate(parts) if parts else np.zeros(0, dtype=bool)
        out[ind] = float(x.mean()) if x.size else None
    return out


def _sector_pass(net: Network, sector: SectorData, cfg: TrainConfig, epoch: int):
    cache = forward(net, sector.features)
    rec = reconstruction_loss(cache.x, cache.reconstruction)
    if not np.isfinite(rec):
        raise NumericalError(f"epoch {epoch}, sector {sector.sector_id}: non-finite reconstruction loss")
    grad_latent = np.zeros_like(cache.latent)
    clu = 0.0
    sector_hits, sector_weighted = {}, {}
    states = fit_sector(cache.latent, sector, cfg)
    for c, ind in enumerate(LATENT_INDICATORS):
        st, ov = states[ind], sector.overlays[ind]
        w = label_weights(ov)
        term = clustering_loss(st.latents, st.centers, st.labels, ov, w)
        if not np.isfinite(term):
            raise NumericalError(f"epoch {epoch}, sector {sector.sector_id}: non-finite {ind} clustering loss")
        clu += term
        grad_latent[:, c] = clustering_grad(st.latents, st.centers, st.labels, ov, w)
        sector_hits[ind] = hits(st.labels, ov)
        sector_weighted[ind] = score_indicator(st.labels, ov).weighted_precision
    grads = backward(net, cache, reconstruction_grad(cache.x, cache.reconstruction), grad_latent)
    return rec, clu, grads, sector_hits, sector_weighted


def train_epoch(net: Network, adam: AdamState, sectors: Sequence[SectorData], cfg: TrainConfig,
                epoch: int = 0) -> EpochRecord:
    """Evaluate losses at the current parameters, then take one Adam step."""
    active = [s for s in sectors if s.n_pixels > 0]
    passes = ordered_map(lambda s: _sector_pass(net, s, cfg, epoch), active)
    grads_total = None
    rec_losses, clu_losses = [], []
    hit_lists: dict[str, list[np.ndarray]] = {ind: [] for ind in LATENT_INDICATORS}
    weighted: dict[str, list[float]] = {ind: [] for ind in LATENT_INDICATORS}
    # reduce in sector order so the update is independent of thread count
    for rec, clu, grads, sector_hits, sector_weighted in passes:
        grads_total = grads if grads_total is None else [a + b for a, b in zip(grads_total, grads)]
        rec_losses.append(rec)
        clu_losses.append(clu)
        for ind in LATENT_INDICATORS:
            hit_lists[ind].append(sector_hits[ind])
            if sector_weighted[ind] is not None:
                weighted[ind].append(sector_weighted[ind])
    rec_mean = float(np.mean(rec_losses)) if rec_losses else 0.0
    clu_mean = float(np.mean(clu_losses)) if clu_losses else 0.0
    if grads_total is not None:
        adam_step(net, grads_total, adam)
    return EpochRecord(
        epoch=epoch,
        reconstruction=rec_mean,
        clustering=clu_mean,
        total=rec_mean + clu_mean,
        precision=_pooled(hit_lists),
        weighted_precision={k: (float(np.mean(v)) if v else None) for k, v in weighted.items()},
    )


def predict_sector(net: Network, sector: SectorData, cfg: TrainConfig | None = None):
    """Latents and constrained cluster states for one sector."""
    cfg = cfg or TrainConfig()
    latent = encode(net, sector.features) if sector.n_pixels else np.zeros((0, len(LATENT_INDICATORS)))
    return latent, fit_sector(latent, sector, cfg)


def evaluate(net: Network, sectors: Sequence[SectorData], cfg: TrainConfig | None = None) -> dict[str, float | None]:
    """Pooled modified precision per indicator over ``sectors``."""
    hit_lists: dict[str, list[np.ndarray]] = {ind: [] for ind in LATENT_INDICATORS}
    active = [s for s in sectors if s.n_pixels > 0]
    for sector, (_, states) in zip(active, ordered_map(lambda s: predict_sector(net, s, cfg), active)):
        for ind in LATENT_INDICATORS:
            hit_lists[ind].append(hits(states[ind].labels, sector.overlays[ind]))
    return _pooled(hit_lists)


def select_model(records: Sequence[EpochRecord]) -> int:
    """Epoch with the lowest clustering loss; the earliest one on ties."""
    if not records:
        raise ValidationError("no epoch records to select from")
    best = min(range(len(records)), key=lambda i: (records[i].clustering, i))
    return records[best].epoch


@dataclass
class TrainResult:
    records: list[EpochRecord]
    selected_epoch: int
    selected: Network
    final: Network
    adam: AdamState


def train(sectors: Sequence[SectorData], cfg: TrainConfig, heldout: Sequence[SectorData] = (),
          net: Network | None = None) -> TrainResult:
    net = net or Network.initialize(cfg.seed)
    adam = AdamState.for_network(net, learning_rate=cfg.learning_rate, beta1=cfg.beta1,
                                 beta2=cfg.beta2, eps=cfg.eps)
    records: list[EpochRecord] = []
    best_net, best_loss, best_epoch = net.copy(), np.inf, 0
    for epoch in range(cfg.epochs):
        snapshot = net.copy()
        record = train_epoch(net, adam, sectors, cfg, epoch)
        if heldout:
            record.heldout_precision = evaluate(snapshot, heldout, cfg)
        records.append(record)
        if record.clustering < best_loss:
            best_net, best_loss, best_epoch = snapshot, record.clustering, epoch
        log.debug("epoch %d rec %.6f clu %.6f", epoch, record.reconstruction, record.clustering)
    if records:
        assert select_model(records) == best_epoch
    return TrainResult(records, best_epoch, best_net, net, adam)


@dataclass
class FoldReport:
    fold: int
    heldout: list[str]
    selected_epoch: int
    train_precision: dict[str, float | None]
    test_precision: dict[str, float | None]

    @staticmethod
    def _mean(d):
        vals = [v for v in d.values() if v is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def train_mean(self) -> float | None:
        return self._mean(self.train_precision)

    @property
    def test_mean(self) -> float | None:
        return self._mean(self.test_precision)


def make_folds(sector_ids: Sequence[str], fold_count: int, seed: int) -> list[list[str]]:
    if fold_count < 2 or len(sector_ids) < fold_count:
        raise ValidationError(f"need at least {max(fold_count, 2)} sectors for {fold_count}-fold cross-validation, "
                              f"got {len(sector_ids)}")
    perm = np.random.default_rng(seed).permutation(len(sector_ids))
    return [[sector_ids[i] for i in part] for part in np.array_split(perm, fold_count)]


def cross_validate(sectors: Sequence[SectorData], cfg: TrainConfig) -> list[FoldReport]:
    labelled = [s for s in sectors if s.has_groundtruth]
    folds = make_folds([s.sector_id for s in labelled], cfg.fold_count, cfg.seed)
    by_id = {s.sector_id: s for s in labelled}
    reports = []
    for i, held in enumerate(folds):
        train_set = [s for s in labelled if s.sector_id not in held]
        test_set = [by_id[h] for h in held]
        result = train(train_set, cfg)
        reports.append(FoldReport(i, list(held), result.selected_epoch,
                                  evaluate(result.selected, train_set, cfg),
                                  evaluate(result.selected, test_set, cfg)))
    return reports


LOSS_COLUMNS = ["epoch", "reconstruction", "clustering", "total",
                *(f"precision_{i}" for i in LATENT_INDICATORS),
                *(f"weighted_precision_{i}" for i in LATENT_INDICATORS),
                *(f"heldout_precision_{i}" for i in LATENT_INDICATORS)]


def write_losses(records: Sequence[EpochRecord], path: str | Path) -> None:
    f = lambda v: "" if v is None else repr(float(v))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_COLUMNS)
        for r in records:
            w.writerow([r.epoch, f(r.reconstruction), f(r.clustering), f(r.total),
                        *(f(r.precision.get(i)) for i in LATENT_INDICATORS),
                        *(f(r.weighted_precision.get(i)) for i in LATENT_INDICATORS),
                        *(f(r.heldout_precision.get(i)) for i in LATENT_INDICATORS)])


def read_losses(path: str | Path) -> list[EpochRecord]:
    g = lambda v: float(v) if v != "" else None
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            out.append(EpochRecord(int(r["epoch"]), float(r["reconstruction"]), float(r["clustering"]),
                                   float(r["total"]),
                                   {i: g(r[f"precision_{i}"]) for i in LATENT_INDICATORS},
                                   {i: g(r[f"weighted_precision_{i}"]) for i in LATENT_INDICATORS},
                                   {i: g(r[f"heldout_precision_{i}"]) for i in LATENT_INDICATORS}))
    return out
