import json
import math
import re
import subprocess
import sys

import numpy as np
import pytest
from scipy import ndimage

from radsearch.cli import main, parse_seeds
from radsearch.errors import ConfigError
from radsearch.geo import GeoTransform, Raster, read_ascii_grid, write_ascii_grid
from radsearch.radiation import max_counts_poi, read_measurements_csv
from radsearch.segmentation import BUILDING, GRASS, ROAD
from radsearch.survey import SurveyPlan, generate_scanlines, path_length, write_plan_json

SMALL = ["--width", "160", "--height", "140", "--n-buildings", "2", "--n-vehicles", "3", "--n-trees", "3"]
GOAL = "73.8,42"


def run(*argv):
    return main([str(a) for a in argv])


def err_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert main(["scene-gen", "--seed", "2", "--out", str(out), *SMALL]) == 0
    return out


@pytest.fixture(scope="module")
def source_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("src") / "sources.json"
    p.write_text(json.dumps([{"nuclide": "Cs-137", "activity_uci": 100.0, "x": 73.8, "y": 42.0, "z": 1.0}]))
    return p


def test_scene_gen_deterministic(tmp_path, scene_dir):
    assert run("scene-gen", "--seed", 2, "--out", tmp_path, *SMALL) == 0
    for name in ("ortho.ppm", "dem.asc", "labels.asc", "legend.json", "truth.json"):
        assert (tmp_path / name).read_bytes() == (scene_dir / name).read_bytes()


def test_scene_categories_and_road_connected(scene_dir):
    lab = read_ascii_grid(scene_dir / "labels.asc", "label").data
    assert set(np.unique(lab)) == set(range(6))
    _, n = ndimage.label(lab == ROAD)
    assert n == 1


def test_scene_gen_needs_seed(tmp_path, capsys):
    assert run("scene-gen", "--out", tmp_path) == 2
    assert err_json(capsys)["exit_code"] == 2


def test_survey_count_formula(tmp_path):
    plan = SurveyPlan((0.0, 0.0, 40.0, 17.0), line_spacing=4.0, speed=3.0, sample_hz=1.0)
    write_plan_json(plan, tmp_path / "plan.json")
    assert run("survey", "--plan", tmp_path / "plan.json", "--mission", 1, "--seed", 0, "--out", tmp_path / "o") == 0
    n = len(read_measurements_csv(tmp_path / "o" / "measurements.csv"))
    expect = math.floor(path_length(generate_scanlines(plan)) / plan.speed * plan.sample_hz) + 1
    assert n == expect


def test_survey_empty_aoi(tmp_path, capsys):
    write_plan_json(SurveyPlan((5.0, 5.0, 5.0, 5.0)), tmp_path / "plan.json")
    assert run("survey", "--plan", tmp_path / "plan.json", "--mission", 1, "--seed", 0, "--out", tmp_path) == 2
    assert err_json(capsys)["error"] == "config"


@pytest.fixture(scope="module")
def flights(tmp_path_factory):
    d = tmp_path_factory.mktemp("flights")
    assert main(["survey", "--mission", "1", "--seed", "4", "--out", str(d / "src")]) == 0
    assert main(["survey", "--mission", "1", "--seed", "5", "--background-only", "--out", str(d / "bg")]) == 0
    return d


def test_analyze_matches_library_and_rejects(flights, tmp_path):
    src = flights / "src" / "measurements.csv"
    assert run("analyze", "--measurements", src, "--background", flights / "bg" / "measurements.csv", "--out", tmp_path) == 0
    res = json.loads((tmp_path / "analysis.json").read_text())
    i, pos, c = max_counts_poi(read_measurements_csv(src))
    assert res["poi"]["index"] == i and res["poi"]["position"] == list(pos) and res["poi"]["counts"] == c
    assert res["t_test"]["reject"] is True


def test_analyze_identical_inputs(flights, tmp_path):
    bg = flights / "bg" / "measurements.csv"
    assert run("analyze", "--measurements", bg, "--background", bg, "--out", tmp_path) == 0
    res = json.loads((tmp_path / "analysis.json").read_text())
    assert res["t_test"]["reject"] is False and res["t_test"]["t"] == 0.0


def test_analyze_bad_csv_is_format_error(flights, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x,y\n1,2\n")
    assert run("analyze", "--measurements", bad, "--background", flights / "bg" / "measurements.csv", "--out", tmp_path) == 4
    assert err_json(capsys)["error"] == "format"


def test_refine_zero_noise_is_truth(scene_dir, tmp_path):
    assert (
        run(
            "refine", "--dem", scene_dir / "dem.asc", "--truth", scene_dir / "labels.asc",
            "--noise", 0, "--seed", 0, "--out", tmp_path,
        )
        == 0
    )
    truth = read_ascii_grid(scene_dir / "labels.asc", "label").data
    assert np.array_equal(read_ascii_grid(tmp_path / "labels_refined.asc", "label").data, truth)
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["refined"]["global"] == 1.0


def test_refine_improves_building_recall(scene_dir, tmp_path):
    assert (
        run(
            "refine", "--dem", scene_dir / "dem.asc", "--truth", scene_dir / "labels.asc",
            "--noise", 0.6, "--seed", 1, "--out", tmp_path,
        )
        == 0
    )
    m = json.loads((tmp_path / "metrics.json").read_text())
    assert m["refined"]["recall"][BUILDING] > m["baseline"]["recall"][BUILDING]


def test_plan_and_no_path(tmp_path, scene_dir, capsys):
    assert run("plan", "--labels", scene_dir / "labels.asc", "--start", "0,42", "--goal", GOAL, "--out", tmp_path) == 0
    p = json.loads((tmp_path / "path.json").read_text())
    assert p["pixels"][0] == [0, 70] and p["pixels"][-1] == [123, 70]
    lab = np.full((20, 30), GRASS)
    lab[:, 15] = BUILDING
    write_ascii_grid(Raster(lab, GeoTransform(0, 0, 0.6), -1, "label"), tmp_path / "wall.asc")
    assert run("plan", "--labels", tmp_path / "wall.asc", "--start", "0,0", "--goal", "17.4,6", "--out", tmp_path) == 3
    assert err_json(capsys)["error"] == "no_path"


def test_sim_without_obstacles(scene_dir, source_file, tmp_path):
    argv = ["sim", "--scene", scene_dir, "--sources", source_file, "--poi", GOAL, "--seed", 3, "--dwell", 10]
    assert run(*argv, "--out", tmp_path / "a") == 0
    s = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert "replanned" not in s["events"] and s["events"][-1] == "returned"
    assert s["dwell_mean"] > s["enroute_mean"]
    assert run(*argv, "--out", tmp_path / "b") == 0
    for name in ("mission.jsonl", "dem_lidar.asc", "labels_updated.asc", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sim_obstacle_replans(scene_dir, source_file, tmp_path):
    obs = tmp_path / "obs.json"
    obs.write_text(json.dumps([{"shape": "disc", "x": 30.0, "y": 42.0, "radius": 1.2, "height": 1.5}]))
    assert run("sim", "--scene", scene_dir, "--sources", source_file, "--poi", GOAL, "--obstacles", obs, "--seed", 3, "--dwell", 5, "--out", tmp_path) == 0
    ev = json.loads((tmp_path / "summary.json").read_text())["events"]
    i = ev.index("replanned")
    assert ev[i - 1] == "obstacle_detected"


def test_sim_seed_range_workers(scene_dir, source_file, tmp_path):
    base = ["sim", "--scene", scene_dir, "--sources", source_file, "--poi", GOAL, "--seeds", "1..2", "--dwell", 5]
    assert run(*base, "--out", tmp_path / "w1") == 0
    assert run(*base, "--workers", 2, "--out", tmp_path / "w2") == 0
    s = json.loads((tmp_path / "w1" / "summary.json").read_text())
    assert [m["seed"] for m in s["missions"]] == [1, 2]
    for name in ("summary.json", "seed_1/mission.jsonl", "seed_2/mission.jsonl"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w2" / name).read_bytes()


def test_parse_seeds():
    assert parse_seeds("3..5") == [3, 4, 5] and parse_seeds("7") == [7]
    with pytest.raises(ConfigError):
        parse_seeds("5..3")


def test_report_histogram_sums(flights, tmp_path):
    src = flights / "src" / "measurements.csv"
    assert run("report", "--measurements", src, "--bin-width", 7, "--out", tmp_path) == 0
    svg = (tmp_path / "histogram.svg").read_text()
    tallies = [int(v) for v in re.findall(r'class="bin"[^>]*data-count="(\d+)"', svg)]
    assert sum(tallies) == len(read_measurements_csv(src))


def test_report_overlay_and_counts_plot(scene_dir, source_file, tmp_path):
    run("plan", "--labels", scene_dir / "labels.asc", "--start", "0,42", "--goal", GOAL, "--out", tmp_path)
    assert run("report", "--path", tmp_path / "path.json", "--labels", scene_dir / "labels.asc", "--out", tmp_path / "r") == 0
    assert (tmp_path / "r" / "path_overlay.ppm").read_bytes()[:2] == b"P6"
    run("sim", "--scene", scene_dir, "--sources", source_file, "--poi", GOAL, "--seed", 1, "--dwell", 3, "--out", tmp_path / "m")
    assert run("report", "--mission-log", tmp_path / "m" / "mission.jsonl", "--out", tmp_path / "r") == 0
    assert "<polyline" in (tmp_path / "r" / "counts_time.svg").read_text()


def test_version(capsys):
    assert run("--version") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["missionlog"] == "radsearch.missionlog/1"


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("RADSEARCH_OUT", str(tmp_path / "env"))
    assert run("survey", "--mission", 2, "--seed", 0) == 0
    assert (tmp_path / "env" / "measurements.csv").exists()
    assert run("survey", "--mission", 2, "--seed", 0, "--out", tmp_path / "flag") == 0
    assert (tmp_path / "flag" / "measurements.csv").exists()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 5, "out_dir": "cfgout", "survey": {"mission": 2}}))
    assert run("survey", "--config", cfg, "--out", tmp_path / "a") == 0
    assert run("survey", "--config", cfg, "--seed", 5, "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "measurements.csv").read_bytes() == (tmp_path / "b" / "measurements.csv").read_bytes()
    assert json.loads((tmp_path / "a" / "survey.json").read_text())["seed"] == 5


def test_config_errors(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "sources_path": "missing.json"}))
    assert run("survey", "--config", cfg, "--out", tmp_path) == 2
    assert "missing.json" in err_json(capsys)["message"]
    assert run("survey", "--bogus-flag") == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "radsearch.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "missionlog" in proc.stdout
