import numpy as np
import pytest

from mpctune.config import (
    Setup, build_series, default_config_text, desk_fixture, load_setup, setup_from_text,
    setup_provenance,
)
from mpctune.objective import provenance_hash
from mpctune.plant import PlantConfig, PlantConfigError
from mpctune.sim import write_series_csv


def test_packaged_config_matches_code_defaults():
    s = load_setup()
    assert s.plant == PlantConfig()
    assert s.span_hours == 672
    assert s.noise_std == 0.1


def test_storage_holds_about_six_hours_of_mean_load():
    s = load_setup()
    assert s.plant.cap_cw / s.series_params["L_cw_mean"] == 6
    assert s.plant.cap_hw / s.series_params["L_hw_mean"] == 6


def test_sections_override_defaults():
    s = setup_from_text("[plant]\nhorizon = 6\n[sim]\nspan_hours = 12\nnoise_std = 0\n"
                        "[series]\nL_cw_mean = 10\n")
    assert s.plant.horizon == 6 and s.span_hours == 12 and s.noise_std == 0.0
    assert s.series_params["L_cw_mean"] == 10.0
    assert s.series_params["L_hw_mean"] == 400.0


@pytest.mark.parametrize("kw", [{"span_hours": 0}, {"noise_std": -0.1}, {"soc_init": 1.5}])
def test_setup_validation(kw):
    with pytest.raises(PlantConfigError):
        Setup(**kw)


def test_series_length_and_csv_source(tmp_path):
    s = load_setup().replace(span_hours=10, noise_std=0.0)
    series = build_series(s)
    assert len(series) == 10 + s.plant.horizon
    write_series_csv(tmp_path / "f.csv", series)
    again = build_series(s, tmp_path / "f.csv")
    np.testing.assert_array_equal(again.L_cw, series.L_cw)
    with pytest.raises(PlantConfigError, match="need"):
        build_series(s.replace(span_hours=20), tmp_path / "f.csv")


def test_provenance_tracks_config_and_series():
    s = load_setup().replace(span_hours=10)
    h = provenance_hash(setup_provenance(s, build_series(s)))
    assert h == provenance_hash(setup_provenance(s, build_series(s)))
    s2 = s.replace(noise_seed=5)
    assert h != provenance_hash(setup_provenance(s2, build_series(s2)))


def test_desk_fixture_shape():
    setup, series = desk_fixture()
    assert setup.plant.horizon == 24 and setup.span_hours == 168
    assert len(series) == 192


def test_default_text_is_documented():
    text = default_config_text()
    assert "[plant]" in text and "[sim]" in text and "[series]" in text
    assert "# four weeks" in text
