from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from ccc import pipeline as pl
from ccc import synth

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def prepare_bundle(root: Path, seed: int = 0, config: synth.ScenarioConfig | None = None) -> Path:
    """Synthetic bundle with selected pixels and features under ``root``."""
    synth.write_bundle(synth.generate(seed, config), root)
    pl.run_select(root / "grids", root / "constraints.csv", root / "pixels.csv")
    pl.run_features(root / "bands", root / "pixels.csv", root / "feat")
    return root


@pytest.fixture(scope="session")
def bundle(tmp_path_factory) -> Path:
    """The default scenario: 3 sectors of 1,000 pixels, noise 0."""
    return prepare_bundle(tmp_path_factory.mktemp("bundle"))


@pytest.fixture(scope="session")
def small_bundle(tmp_path_factory) -> Path:
    return prepare_bundle(tmp_path_factory.mktemp("small"), seed=3,
                          config=synth.ScenarioConfig(pixels_per_sector=150, epochs=20))
