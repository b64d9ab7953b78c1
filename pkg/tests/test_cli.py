import csv

import pytest
from click.testing import CliRunner

from ccc.cli import cli, main


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("--seed", 1, "synth", "--out", root / "b", "--pixels", 200, "--epochs", 30) == 0
    return root


def test_full_pipeline(workdir):
    b, w = workdir / "b", workdir
    assert run("constraints", "--census", b / "census.csv", "--tables", b / "tables", "--out", w / "c.csv") == 0
    assert (w / "c.csv").read_bytes() == (b / "constraints.csv").read_bytes()
    assert run("select", "--grids", b / "grids", "--constraints", w / "c.csv", "--out", w / "px.csv") == 0
    assert run("features", "--bands", b / "bands", "--pixels", w / "px.csv", "--out", w / "feat") == 0
    assert run("--threads", 2, "train", "--features", w / "feat", "--constraints", w / "c.csv",
               "--groundtruth", b / "gt.csv", "--mappings", b / "mappings", "--config", b / "train.toml",
               "--heldout", "S03", "--out", w / "model") == 0
    for name in ("losses.csv", "losses.png", "model.json", "final.json"):
        assert (w / "model" / name).stat().st_size > 0
    with open(w / "model" / "losses.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 30
    assert run("predict", "--features", w / "feat", "--constraints", w / "c.csv",
               "--checkpoint", w / "model" / "model.json", "--out", w / "pred") == 0
    assert sorted(p.name for p in (w / "pred").iterdir()) == [f"assignments_S0{i}.csv" for i in (1, 2, 3)]
    assert run("evaluate", "--predictions", w / "pred", "--groundtruth", b / "gt.csv",
               "--mappings", b / "mappings", "--out", w / "report.csv") == 0
    assert (w / "report.png").exists()
    assert run("aggregate", "--predictions", w / "pred", "--hierarchy", b / "hierarchy.csv",
               "--grids", b / "grids", "--out", w / "agg") == 0
    for level in ("sector", "district", "province"):
        assert (w / "agg" / f"aggregate_{level}.png").exists()
    assert (w / "agg" / "grids" / "S01_roof.asc").exists()


def test_cv_command(workdir):
    b, w = workdir / "b", workdir
    run("select", "--grids", b / "grids", "--constraints", b / "constraints.csv", "--out", w / "px2.csv")
    run("features", "--bands", b / "bands", "--pixels", w / "px2.csv", "--out", w / "feat2")
    cfg = w / "cv.cfg"
    cfg.write_text("epochs = 5\nlearning_rate = 0.01\nfold_count = 3\n")
    assert run("cv", "--features", w / "feat2", "--constraints", b / "constraints.csv",
               "--groundtruth", b / "gt.csv", "--mappings", b / "mappings", "--config", cfg,
               "--out", w / "cv.csv") == 0
    with open(w / "cv.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert sorted(r["heldout"] for r in rows) == ["S01", "S02", "S03"]


def test_validation_error_exit_code(workdir, capsys):
    bad = workdir / "bad_census.csv"
    text = (workdir / "b" / "census.csv").read_text().splitlines()
    cells = text[1].split(",")
    cells[4] = "0.9"  # wall shares no longer sum to one
    bad.write_text("\n".join([text[0], ",".join(cells), *text[2:]]) + "\n")
    assert run("constraints", "--census", bad, "--out", workdir / "x.csv") == 2
    assert "S01" in capsys.readouterr().err


def test_infeasible_exit_code(workdir, tmp_path):
    grid = tmp_path / "grids" / "S01"
    grid.mkdir(parents=True)
    body = "ncols 3\nnrows 3\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n"
    (grid / "built_prob.asc").write_text(body + "0.5 0.5 0.5\n" * 3)
    (grid / "footprint.asc").write_text(body + "0 0 0\n" * 3)
    src = (workdir / "b" / "constraints.csv").read_text().splitlines()
    cons = tmp_path / "c.csv"
    cons.write_text("\n".join([src[0], *[line for line in src[1:] if line.startswith("S01")]]) + "\n")
    assert run("select", "--grids", tmp_path / "grids", "--constraints", cons, "--out", tmp_path / "p.csv") == 3


def test_unknown_heldout_is_usage_error(workdir):
    b = workdir / "b"
    code = run("train", "--features", workdir / "feat", "--constraints", b / "constraints.csv",
               "--heldout", "NOPE", "--out", workdir / "m2")
    assert code == 2


def test_help_and_version():
    r = CliRunner().invoke(cli, ["--help"])
    assert r.exit_code == 0
    for cmd in ("constraints", "select", "features", "train", "cv", "predict", "evaluate", "aggregate", "synth"):
        assert cmd in r.output
    assert CliRunner().invoke(cli, ["--version"]).exit_code == 0
