"""
Run setup: plant parameters, simulation settings and disturbance series,
loaded from one text config file (the packaged ``desk.cfg`` by default).
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .plant import PlantConfig, PlantConfigError, parse_config_text, plant_config_from_dict
from .sim import DEFAULT_SERIES, DisturbanceSeries, read_series_csv, synthetic_series


@dataclass(frozen=True)
class Setup:
    plant: PlantConfig = field(default_factory=PlantConfig)
    span_hours: int = 672
    noise_std: float = 0.1
    noise_seed: int = 0
    soc_init: float = 0.5
    series_params: dict = field(default_factory=lambda: dict(DEFAULT_SERIES))

    def __post_init__(self):
        if self.span_hours < 1:
            raise PlantConfigError("span_hours must be positive")
        if not self.noise_std >= 0:
            raise PlantConfigError("noise_std must be nonnegative")
        if not 0.0 <= self.soc_init <= 1.0:
            raise PlantConfigError("soc_init must be a fraction in [0, 1]")

    def replace(self, **kw) -> "Setup":
        return dataclasses.replace(self, **kw)


def default_config_text() -> str:
    return resources.files("mpctune").joinpath("data/desk.cfg").read_text()


def setup_from_text(text: str) -> Setup:
    sections = parse_config_text(text)
    return Setup(plant=plant_config_from_dict(sections["plant"]),
                 series_params={**DEFAULT_SERIES, **sections["series"]},
                 **sections["sim"])


def load_setup(path=None) -> Setup:
    """Read a config file; ``None`` loads the packaged desk plant."""
    if path is None:
        return setup_from_text(default_config_text())
    with open(path) as fh:
        return setup_from_text(fh.read())


def build_series(setup: Setup, csv_path=None) -> DisturbanceSeries:
    """Disturbances covering ``span_hours + horizon`` hours."""
    need = setup.span_hours + setup.plant.horizon
    if csv_path is None:
        return synthetic_series(need, setup.series_params, setup.noise_std, setup.noise_seed)
    series = read_series_csv(csv_path, setup.noise_std, setup.noise_seed)
    if len(series) < need:
        raise PlantConfigError(f"{csv_path} has {len(series)} hours; need {need}")
    return series


def series_digest(series: DisturbanceSeries) -> str:
    h = hashlib.sha256()
    for f in dataclasses.fields(series):
        h.update(np.ascontiguousarray(getattr(series, f.name), dtype=np.float64).tobytes())
    return h.hexdigest()


def setup_provenance(setup: Setup, series: DisturbanceSeries) -> dict:
    """Everything a cached cost grid depends on."""
    return {"setup": dataclasses.asdict(setup), "series_sha256": series_digest(series)}


def desk_fixture(horizon: int = 24, span_hours: int = 168, noise_std: float = 0.1,
                 noise_seed: int = 1) -> tuple:
    """The packaged desk plant shortened to one week: ``(setup, series)``."""
    base = load_setup()
    setup = base.replace(plant=base.plant.replace(horizon=horizon), span_hours=span_hours,
                         noise_std=noise_std, noise_seed=noise_seed)
    return setup, build_series(setup)
