"""``ccc`` command line: file-in/file-out pipeline steps."""

from __future__ import annotations

import csv
import logging
import sys
from pathlib import Path

import click

from . import census as cen
from . import pipeline as pl
from .autoencoder import load_checkpoint, save_checkpoint
from .errors import CCCError
from .metrics import load_mappings
from .parallel import set_threads
from .training import TrainConfig, cross_validate, train, write_losses

log = logging.getLogger("ccc")

_in_path = click.Path(exists=True, path_type=Path)
_out_path = click.Path(path_type=Path)


def _config(path: Path | None, seed: int | None) -> TrainConfig:
    cfg = TrainConfig.from_file(path) if path else TrainConfig()
    if seed is not None:
        cfg.seed = seed
    return cfg


@click.group()
@click.option("--seed", type=int, default=None, help="Overrides the seed of the config file.")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
              help="Worker threads for per-sector work.")
@click.option("-v", "--verbose", count=True, help="Repeat for debug output.")
@click.version_option(package_name="ccc")
@click.pass_context
def cli(ctx: click.Context, seed: int | None, threads: int, verbose: int) -> None:
    """Census-constrained building classification."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    set_threads(threads)
    ctx.obj = {"seed": seed}


@cli.command()
@click.option("--census", "census_path", type=_in_path, required=True)
@click.option("--tables", type=_in_path, default=None, help="Directory of conditional tables; bundled if omitted.")
@click.option("--out", type=_out_path, required=True)
def constraints(census_path: Path, tables: Path | None, out: Path) -> None:
    """Per-class dwelling, building and pixel counts per sector."""
    sets = pl.run_constraints(census_path, tables, out)
    click.echo(f"wrote {len(sets)} constraint sets to {out}")


@cli.command()
@click.option("--grids", type=_in_path, required=True, help="Per-sector grid directories or a pixel-table CSV.")
@click.option("--constraints", "constraints_path", type=_in_path, required=True)
@click.option("--out", type=_out_path, required=True)
def select(grids: Path, constraints_path: Path, out: Path) -> None:
    """Choose building pixels so each sector matches its pixel constraint."""
    sets = pl.run_select(grids, constraints_path, out)
    click.echo(f"selected {sum(len(s) for s in sets)} pixels in {len(sets)} sectors")


@cli.command()
@click.option("--bands", type=_in_path, required=True, help="Per-sector band grid directories or a band-table CSV.")
@click.option("--pixels", type=_in_path, required=True)
@click.option("--out", type=_out_path, required=True)
def features(bands: Path, pixels: Path, out: Path) -> None:
    """Normalized 14-column feature matrices, one CSV per sector."""
    fms = pl.run_features(bands, pixels, out)
    click.echo(f"wrote features for {len(fms)} sectors to {out}")


@cli.command("train")
@click.option("--features", "features_dir", type=_in_path, required=True)
@click.option("--constraints", "constraints_path", type=_in_path, required=True)
@click.option("--groundtruth", type=_in_path, default=None)
@click.option("--mappings", type=_in_path, default=None, help="Label mapping directory; bundled if omitted.")
@click.option("--config", "config_path", type=_in_path, default=None, help="Flat key = value config file.")
@click.option("--heldout", multiple=True, help="Sector id excluded from training and tracked separately.")
@click.option("--out", type=_out_path, required=True)
@click.pass_context
def train_cmd(ctx, features_dir, constraints_path, groundtruth, mappings, config_path, heldout, out) -> None:
    """Train the autoencoder jointly with the constrained clustering."""
    from .plotting import plot_losses

    cfg = _config(config_path, ctx.obj["seed"])
    sectors = pl.load_sectors(features_dir, constraints_path, groundtruth,
                              load_mappings(mappings) if groundtruth else None)
    unknown = sorted(set(heldout) - {s.sector_id for s in sectors})
    if unknown:
        raise click.BadParameter(f"unknown sector ids {unknown}", param_hint="--heldout")
    train_set = [s for s in sectors if s.sector_id not in heldout]
    test_set = [s for s in sectors if s.sector_id in heldout]
    result = train(train_set, cfg, heldout=test_set)
    out.mkdir(parents=True, exist_ok=True)
    write_losses(result.records, out / "losses.csv")
    plot_losses(result.records, out / "losses.png", result.selected_epoch)
    save_checkpoint(out / "model.json", result.selected, epoch=result.selected_epoch)
    save_checkpoint(out / "final.json", result.final, result.adam, epoch=cfg.epochs - 1)
    rec = result.records[result.selected_epoch]
    prec = ", ".join(f"{k} {v:.4f}" for k, v in rec.precision.items() if v is not None)
    click.echo(f"selected epoch {result.selected_epoch} (clustering loss {rec.clustering:.6g}){': ' + prec if prec else ''}")


@cli.command()
@click.option("--features", "features_dir", type=_in_path, required=True)
@click.option("--constraints", "constraints_path", type=_in_path, required=True)
@click.option("--groundtruth", type=_in_path, required=True)
@click.option("--mappings", type=_in_path, default=None)
@click.option("--config", "config_path", type=_in_path, default=None)
@click.option("--out", type=_out_path, required=True, help="Fold report CSV.")
@click.pass_context
def cv(ctx, features_dir, constraints_path, groundtruth, mappings, config_path, out) -> None:
    """k-fold cross-validation over labelled sectors."""
    cfg = _config(config_path, ctx.obj["seed"])
    sectors = pl.load_sectors(features_dir, constraints_path, groundtruth, load_mappings(mappings))
    reports = cross_validate(sectors, cfg)
    fmt = lambda v: "" if v is None else repr(float(v))
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "heldout", "selected_epoch", "train_precision", "test_precision"])
        for r in reports:
            w.writerow([r.fold, " ".join(r.heldout), r.selected_epoch, fmt(r.train_mean), fmt(r.test_mean)])
    for r in reports:
        click.echo(f"fold {r.fold}: train {r.train_mean}, test {r.test_mean}")


@cli.command()
@click.option("--features", "features_dir", type=_in_path, required=True)
@click.option("--constraints", "constraints_path", type=_in_path, required=True)
@click.option("--checkpoint", type=_in_path, required=True)
@click.option("--tables", type=_in_path, default=None)
@click.option("--config", "config_path", type=_in_path, default=None)
@click.option("--out", type=_out_path, required=True)
@click.pass_context
def predict(ctx, features_dir, constraints_path, checkpoint, tables, config_path, out) -> None:
    """Per-pixel class assignments, one CSV per sector."""
    cfg = _config(config_path, ctx.obj["seed"])
    net, _, _ = load_checkpoint(checkpoint)
    sectors = pl.load_sectors(features_dir, constraints_path)
    labels = pl.predict(net, sectors, cen.load_tables(tables), cfg)
    out.mkdir(parents=True, exist_ok=True)
    for s in sectors:
        pl.write_assignments(s, labels[s.sector_id], out / f"assignments_{s.sector_id}.csv")
    click.echo(f"wrote assignments for {len(sectors)} sectors to {out}")


@cli.command()
@click.option("--predictions", type=_in_path, required=True)
@click.option("--groundtruth", type=_in_path, required=True)
@click.option("--mappings", type=_in_path, default=None)
@click.option("--out", type=_out_path, required=True)
def evaluate(predictions, groundtruth, mappings, out) -> None:
    """Modified precision per sector and indicator; writes a bar chart alongside."""
    from .plotting import plot_report

    rows = pl.run_evaluate(predictions, groundtruth, load_mappings(mappings), out)
    plot_report(rows, Path(out).with_suffix(".png"))
    for sid, ind, s in rows:
        if sid == "ALL":
            p = "n/a" if s.precision is None else f"{s.precision:.4f}"
            click.echo(f"{ind}: precision {p} over {s.covered} covered pixels")


@cli.command()
@click.option("--predictions", type=_in_path, required=True)
@click.option("--hierarchy", type=_in_path, required=True)
@click.option("--grids", type=_in_path, default=None, help="Grid directories giving the raster shape per sector.")
@click.option("--out", type=_out_path, required=True, help="Output directory.")
def aggregate(predictions, hierarchy, grids, out) -> None:
    """Class counts at sector, district and province level, plus class rasters."""
    from .plotting import plot_aggregate

    out.mkdir(parents=True, exist_ok=True)
    rows = pl.aggregate(pl.sector_counts(predictions), pl.read_hierarchy(hierarchy))
    pl.write_aggregate(rows, out / "aggregate.csv")
    for level in ("sector", "district", "province"):
        plot_aggregate(rows, level, out / f"aggregate_{level}.png")
    shapes = {sid: g.shape for sid, g in pl.load_grids(grids).items()} if grids else {}
    pl.export_class_grids(predictions, shapes, out / "grids")
    click.echo(f"wrote {len(rows)} aggregate rows to {out / 'aggregate.csv'}")


@cli.command()
@click.option("--out", type=_out_path, required=True)
@click.option("--sectors", "n_sectors", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--pixels", "pixels_per_sector", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--noise", type=click.FloatRange(min=0), default=0.0, show_default=True)
@click.option("--rural-fraction", type=click.FloatRange(0, 1), default=0.0, show_default=True)
@click.option("--coverage", type=click.FloatRange(0, 1), default=0.6, show_default=True)
@click.option("--epochs", type=click.IntRange(min=1), default=200, show_default=True)
@click.pass_context
def synth(ctx, out, n_sectors, pixels_per_sector, noise, rural_fraction, coverage, epochs) -> None:
    """Write a synthetic input bundle with known per-pixel classes."""
    from .synth import ScenarioConfig, generate, write_bundle

    cfg = ScenarioConfig(n_sectors=n_sectors, pixels_per_sector=pixels_per_sector, noise=noise,
                         rural_fraction=rural_fraction, coverage=coverage, epochs=epochs)
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else 0
    write_bundle(generate(seed, cfg), out)
    click.echo(f"wrote synthetic bundle (seed {seed}) to {out}")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="ccc", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except CCCError as e:
        click.echo(f"error: {e}", err=True)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
