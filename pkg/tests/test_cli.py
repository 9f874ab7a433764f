import csv
import json

import numpy as np
import pytest

from mpctune.cli import main
from mpctune.objective import CostGrid
from mpctune.sim import DisturbanceSeries, write_series_csv

SMALL = "[plant]\nhorizon = 6\n[sim]\nspan_hours = 12\nnoise_seed = 3\n"


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return str(path)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def series_file(tmp_path, name, L_cw):
    z = np.zeros(30)
    s = DisturbanceSeries.from_forecast(z, np.full(30, L_cw), z, np.full(30, 0.1 if L_cw else 0.0))
    path = tmp_path / name
    write_series_csv(path, s)
    return str(path)


def test_simulate_zero_loads(tmp_path, small_cfg):
    out = tmp_path / "zero"
    code = main(["simulate", "--config", small_cfg, "--series", series_file(tmp_path, "z.csv", 0.0),
                 "--out", str(out)])
    assert code == 0
    assert json.loads((out / "result.json").read_text())["total"] == 0.0
    m = manifest(out)
    assert m["status"] == "ok" and m["simulations"] == 1
    assert set(m["module_hashes"]) >= {"gp", "lp", "sim"}


def test_simulate_baseline_is_reproducible(tmp_path, small_cfg):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["simulate", "--config", small_cfg, "--beta", "0.1,0.1", "--out", str(out)]) == 0
    for name in ("hourly.csv", "weekly.csv", "violations.csv", "result.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    assert manifest(outs[0])["details"]["beta"] == [0.1, 0.1]


def test_config_errors_exit_2(tmp_path, small_cfg):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[plant]\nhorizon = soon\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o1")]) == 2
    assert main(["simulate", "--config", small_cfg, "--beta", "0.9,0.1",
                 "--out", str(tmp_path / "o2")]) == 2
    assert main(["simulate", "--config", small_cfg, "--beta", "x",
                 "--out", str(tmp_path / "o3")]) == 2
    assert main(["tune", "--objective", "bogus", "--out", str(tmp_path / "o4")]) == 2
    assert main(["tune", "--objective", "synthetic:banana", "--out", str(tmp_path / "o5")]) == 2
    assert manifest(tmp_path / "o1")["exit_code"] == 2


def test_lp_failure_exits_3(tmp_path, small_cfg):
    out = tmp_path / "fail"
    code = main(["simulate", "--config", small_cfg, "--series",
                 series_file(tmp_path, "huge.csv", 1e5), "--out", str(out)])
    assert code == 3
    m = manifest(out)
    assert m["details"]["failure"]["hour"] == "0"
    assert (out / "failed_lp_hour0.lp").exists()


def test_grid_writes_files_and_uses_cache(tmp_path, small_cfg, capsys):
    out = tmp_path / "grid"
    args = ["grid", "--config", small_cfg, "--knots", "0,0.5;0,0.5", "--out", str(out)]
    assert main(args) == 0
    rows = list(csv.reader((out / "grid.csv").open()))
    assert rows[0] == ["beta_cw", "beta_hw", "cost"] and len(rows) == 5
    assert manifest(out)["simulations"] == 4
    first = (out / "grid.json").read_bytes()

    assert main(args) == 0
    assert "cached" in capsys.readouterr().out
    assert manifest(out)["simulations"] == 0
    assert (out / "grid.json").read_bytes() == first

    assert main(args + ["--force"]) == 0
    assert manifest(out)["simulations"] == 4


def test_partial_grid_exits_4(tmp_path, small_cfg):
    out = tmp_path / "partial"
    code = main(["grid", "--config", small_cfg, "--series", series_file(tmp_path, "h.csv", 1e5),
                 "--knots", "0,0.5", "--out", str(out)])
    assert code == 4
    grid = json.loads((out / "grid.json").read_text())
    assert grid["complete"] is False
    assert manifest(out)["status"] == "partial"


def test_tune_synthetic(tmp_path):
    out = tmp_path / "tune"
    assert main(["tune", "--objective", "synthetic:quadratic", "--seed", "1", "--out", str(out)]) == 0
    rows = list(csv.reader((out / "trace.csv").open()))
    assert len(rows) == 14
    assert rows[0][:5] == ["iteration", "x0", "x1", "objective", "best_so_far"]
    snap = list(csv.reader((out / "gp_snapshot.csv").open()))
    assert snap[0] == ["iteration", "n", "beta_cw", "beta_hw", "mean", "sd"]
    assert len(snap) == 1 + 11 * 2500
    assert json.loads((out / "trace.json").read_text())["best"]["value"] < 1.01


def test_tune_replays_a_grid_without_simulating(tmp_path, small_cfg):
    gdir = tmp_path / "g"
    assert main(["grid", "--config", small_cfg, "--knots", "0,0.25,0.5", "--out", str(gdir)]) == 0
    out = tmp_path / "t"
    code = main(["tune", "--config", small_cfg, "--objective", f"grid:{gdir / 'grid.json'}",
                 "--iters", "4", "--out", str(out)])
    assert code == 0
    m = manifest(out)
    assert m["simulations"] == 0
    grid = CostGrid.load(gdir / "grid.json")
    assert m["details"]["best_value"] >= grid.min() - 1e-9


def test_tune_refuses_a_grid_from_another_config(tmp_path, small_cfg):
    gdir = tmp_path / "g"
    assert main(["grid", "--config", small_cfg, "--knots", "0,0.5", "--out", str(gdir)]) == 0
    other = tmp_path / "other.cfg"
    other.write_text(SMALL.replace("noise_seed = 3", "noise_seed = 4"))
    sel = f"grid:{gdir / 'grid.json'}"
    assert main(["tune", "--config", str(other), "--objective", sel, "--iters", "1",
                 "--out", str(tmp_path / "t1")]) == 2
    assert main(["tune", "--config", str(other), "--objective", sel, "--iters", "1", "--force",
                 "--out", str(tmp_path / "t2")]) == 0


def test_tune_live(tmp_path, small_cfg):
    out = tmp_path / "live"
    assert main(["tune", "--config", small_cfg, "--iters", "1", "--init", "2", "--out", str(out)]) == 0
    assert manifest(out)["simulations"] == 3


def test_tune_live_failure_writes_partial_trace(tmp_path, small_cfg):
    out = tmp_path / "live"
    code = main(["tune", "--config", small_cfg, "--series", series_file(tmp_path, "h.csv", 1e5),
                 "--out", str(out)])
    assert code == 4
    samples = json.loads((out / "trace.json").read_text())["samples"]
    # the first failed simulation stops the run
    assert len(samples) == 1 and samples[0]["value"] is None
