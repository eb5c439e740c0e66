"""``radsearch`` command line: scene-gen, survey, analyze, refine, plan, sim, report.

Each command reads an optional JSON config (``--config``); flags override
config values.  Failures print one JSON object on stderr and exit with
2 (configuration), 3 (no path / mission abort) or 4 (file format / I/O).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, EmptyInputError, RadSearchError
from .geo import Raster, read_ascii_grid, read_ppm, world_to_cell, write_ascii_grid, write_ppm
from .missions import (
    MISSION1_BACKGROUND,
    MISSION2_BACKGROUND,
    UGV_LAB_BACKGROUND,
    calibrate,
    mission1_sources,
    mission2_sources,
    mission_plan,
)
from .planner import CostWeights, PlanGrid, PlanRequest, astar, remove_obstacle_nodes, write_path_json
from .radiation import (
    DetectorModel,
    max_counts_poi,
    median_nearest_k,
    paired_t_test,
    read_measurements_csv,
    read_sources_json,
    welch_t_test,
    write_measurements_csv,
    write_sources_json,
)
from .report import counts_time_svg, histogram_svg, path_overlay
from .scene import SceneConfig, generate_scene
from .segmentation import (
    argmax_labels,
    detect_obstacle_regions,
    precision_recall,
    read_unaries,
    refine_with_dem,
    synth_unaries,
    write_legend_json,
    write_unaries,
)
from .survey import SurveyPlan, read_plan_json, run_survey, write_captures_csv, write_plan_json
from .ugvsim import SCHEMA as MISSIONLOG_SCHEMA
from .ugvsim import TrueScene, UgvConfig, nearest_traversable, read_mission_jsonl, read_obstacle_script, run_mission

log = logging.getLogger("radsearch")

SCHEMAS = {
    "radsearch": __version__,
    "missionlog": MISSIONLOG_SCHEMA,
    "path": "radsearch.path/1",
    "analysis": "radsearch.analysis/1",
    "metrics": "radsearch.metrics/1",
    "scene": "radsearch.scene/1",
    "sim_summary": "radsearch.sim/1",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------


@dataclass
class MissionConfig:
    seed: int | None = None
    out_dir: str | None = None
    scene: dict = field(default_factory=dict)
    survey: dict = field(default_factory=dict)
    detector: dict = field(default_factory=dict)
    sources_path: str | None = None
    planner: dict = field(default_factory=dict)
    ugv: dict = field(default_factory=dict)
    obstacles_path: str | None = None

    @classmethod
    def load(cls, path) -> "MissionConfig":
        if path is None:
            return cls()
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        base = path.parent
        # paths are relative to the config file and must exist at load
        for attr in ("sources_path", "obstacles_path"):
            v = getattr(cfg, attr)
            if v is not None:
                setattr(cfg, attr, str(_existing(base / v)))
        if "dir" in cfg.scene:
            cfg.scene["dir"] = str(_existing(base / cfg.scene["dir"]))
        return cfg


def _existing(p) -> Path:
    p = Path(p)
    if not p.exists():
        raise ConfigError(f"referenced path does not exist: {p}")
    return p


def _pick(flag, section: dict, key, default=None):
    if flag is not None:
        return flag
    return section.get(key, default)


def _seed(args, cfg: MissionConfig) -> int:
    seed = _pick(getattr(args, "seed", None), {"seed": cfg.seed}, "seed")
    if seed is None:
        raise ConfigError("a seed is required (--seed or config 'seed')")
    return int(seed)


def _out_dir(args, cfg: MissionConfig) -> Path:
    out = args.out or os.environ.get("RADSEARCH_OUT") or cfg.out_dir or "out"
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _xy(text) -> tuple[float, float]:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        vals = [float(v) for v in str(text).split(",")]
    if len(vals) != 2:
        raise ConfigError(f"expected 'x,y', got {text!r}")
    return vals[0], vals[1]


def _floats(text, n):
    if text is None:
        return None
    vals = [float(v) for v in (text if isinstance(text, (list, tuple)) else str(text).split(","))]
    if len(vals) != n:
        raise ConfigError(f"expected {n} comma-separated numbers, got {text!r}")
    return tuple(vals)


def parse_seeds(text: str) -> list[int]:
    """``"a..b"`` (inclusive) or a single integer."""
    try:
        if ".." in text:
            a, b = text.split("..")
            a, b = int(a), int(b)
            if b < a:
                raise ConfigError(f"empty seed range {text!r}")
            return list(range(a, b + 1))
        return [int(text)]
    except ValueError:
        raise ConfigError(f"bad seed range {text!r}") from None


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _report(outputs):
    for p in outputs:
        print(p)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_scene_gen(args, cfg: MissionConfig) -> int:
    sec = cfg.scene
    scfg = SceneConfig(
        width=int(_pick(args.width, sec, "width", 458)),
        height=int(_pick(args.height, sec, "height", 440)),
        pixel_size=float(_pick(args.pixel_size, sec, "pixel_size", 0.6)),
        n_buildings=int(_pick(args.n_buildings, sec, "n_buildings", 6)),
        n_vehicles=int(_pick(args.n_vehicles, sec, "n_vehicles", 8)),
        n_trees=int(_pick(args.n_trees, sec, "n_trees", 14)),
        seed=_seed(args, cfg),
    )
    if scfg.width < 64 or scfg.height < 64:
        raise ConfigError("scenes must be at least 64x64 pixels")
    out = _out_dir(args, cfg)
    sc = generate_scene(scfg)
    write_ppm(sc.ortho, out / "ortho.ppm")
    write_ascii_grid(sc.dem, out / "dem.asc")
    write_ascii_grid(sc.labels, out / "labels.asc")
    write_legend_json(out / "legend.json")
    meta = sc.metadata()
    meta.update(schema=SCHEMAS["scene"], seed=scfg.seed)
    _dump(meta, out / "truth.json")
    _report([out / n for n in ("ortho.ppm", "dem.asc", "labels.asc", "legend.json", "truth.json")])
    return 0


def _detector(args, sec: dict, default_bg: float, ugv=False) -> DetectorModel:
    bg = float(_pick(args.background_rate, sec, "background_rate", default_bg))
    k = _pick(args.k, sec, "sensitivity_k", "auto")
    if k == "auto":
        cal = calibrate()
        k = cal.ugv_sensitivity_k if ugv else cal.sensitivity_k
    return DetectorModel(bg, float(k))


def cmd_survey(args, cfg: MissionConfig) -> int:
    sec = dict(cfg.survey)
    seed = _seed(args, cfg)
    mission = _pick(args.mission, sec, "mission")
    if args.scene or "dir" in cfg.scene:
        scene_dir = Path(args.scene or cfg.scene["dir"])
        for name in ("dem.asc", "labels.asc"):
            _existing(scene_dir / name)
    if args.plan:
        plan = read_plan_json(_existing(args.plan))
    elif "aoi" in sec:
        plan = SurveyPlan.from_dict(sec)
    elif mission is not None:
        plan = mission_plan(int(mission))
    else:
        raise ConfigError("survey needs --plan, a config 'survey.aoi', or --mission")
    xmin, ymin, xmax, ymax = plan.aoi
    if xmax <= xmin and ymax <= ymin:
        raise ConfigError(f"empty survey area {plan.aoi}")
    sources_path = args.sources or cfg.sources_path
    if sources_path:
        sources = read_sources_json(_existing(sources_path))
    elif mission is not None:
        sources = {1: mission1_sources, 2: mission2_sources}[int(mission)]()
    else:
        raise ConfigError("survey needs --sources or --mission")
    default_bg = {1: MISSION1_BACKGROUND, 2: MISSION2_BACKGROUND}.get(int(mission) if mission else 0, MISSION2_BACKGROUND)
    det = _detector(args, cfg.detector, default_bg)
    if args.background_only:
        det = DetectorModel(det.background_rate, 0.0)
    out = _out_dir(args, cfg)
    res = run_survey(plan, det, sources, np.random.default_rng(seed))
    write_measurements_csv(res.measurements, out / "measurements.csv")
    write_captures_csv(res.captures, out / "captures.csv")
    write_plan_json(plan, out / "plan.json")
    write_sources_json(sources, out / "sources.json")
    i, pos, c = max_counts_poi(res.measurements)
    counts = np.array([m.counts for m in res.measurements], dtype=float)
    _dump(
        {
            "seed": seed,
            "n_measurements": len(res.measurements),
            "mean_counts": float(counts.mean()),
            "poi": {"index": i, "position": list(pos), "counts": c},
            "detector": {"background_rate": det.background_rate, "sensitivity_k": det.sensitivity_k},
            "background_only": bool(args.background_only),
        },
        out / "survey.json",
    )
    _report([out / n for n in ("measurements.csv", "captures.csv", "plan.json", "sources.json", "survey.json")])
    return 0


def analyze(ms, bg, alpha=0.05, test="welch", near=None, k=10) -> dict:
    if len(ms) < 2 or len(bg) < 2:
        raise EmptyInputError("analysis needs at least 2 samples in each flight")
    src = [m.counts for m in ms]
    ref = [m.counts for m in bg]
    tt = welch_t_test(src, ref, alpha) if test == "welch" else paired_t_test(src, ref, alpha)
    i, pos, c = max_counts_poi(ms)
    out = {
        "schema": SCHEMAS["analysis"],
        "n": len(ms),
        "n_background": len(bg),
        "mean": float(np.mean(src)),
        "sd": float(np.std(src, ddof=1)),
        "background_mean": float(np.mean(ref)),
        "background_sd": float(np.std(ref, ddof=1)),
        "poi": {"index": i, "t": ms[i].t, "position": list(pos), "counts": c},
        "t_test": {
            "kind": test,
            "t": tt.t_stat,
            "dof": tt.dof,
            "p_value": tt.p_value,
            "alpha": tt.alpha,
            "reject": tt.reject,
        },
    }
    if near is not None:
        out["median_nearest"] = {"point": list(near), "k": k, "median": median_nearest_k(ms, near, k)}
    return out


def cmd_analyze(args, cfg: MissionConfig) -> int:
    ms = read_measurements_csv(_existing(args.measurements))
    bg = read_measurements_csv(_existing(args.background))
    result = analyze(ms, bg, args.alpha, args.test, _xy(args.near), args.k)
    out = _out_dir(args, cfg)
    _dump(result, out / "analysis.json")
    _report([out / "analysis.json"])
    return 0


def cmd_refine(args, cfg: MissionConfig) -> int:
    dem = read_ascii_grid(_existing(args.dem), "elevation")
    truth = read_ascii_grid(_existing(args.truth), "label") if args.truth else None
    out = _out_dir(args, cfg)
    outputs = []
    if args.unaries:
        unaries = read_unaries(_existing(args.unaries))
    elif truth is not None and args.noise is not None:
        confusers = None if args.confusers == "building" else {}
        unaries = synth_unaries(truth, float(args.noise), np.random.default_rng(_seed(args, cfg)), confusers)
        write_unaries(unaries, out)
        outputs += [out / f"unary_c{c}.asc" for c in range(6)]
    else:
        raise ConfigError("refine needs --unaries, or --truth with --noise and --seed")
    base = read_ascii_grid(_existing(args.labels), "label") if args.labels else argmax_labels(unaries)
    tau = "auto" if args.tau in (None, "auto") else float(args.tau)
    regions = detect_obstacle_regions(dem, tau, args.n_close, args.min_height)
    refined = refine_with_dem(base, unaries, regions)
    write_ascii_grid(base, out / "labels_2d.asc")
    write_ascii_grid(refined, out / "labels_refined.asc")
    _dump(
        {
            "tau": regions.tau,
            "n_regions": regions.n_regions,
            "cell_counts": regions.cell_counts,
            "bboxes": [list(b) for b in regions.bboxes],
        },
        out / "regions.json",
    )
    outputs += [out / "labels_2d.asc", out / "labels_refined.asc", out / "regions.json"]
    if truth is not None:
        _dump(
            {
                "schema": SCHEMAS["metrics"],
                "baseline": precision_recall(base, truth).to_dict(),
                "refined": precision_recall(refined, truth).to_dict(),
            },
            out / "metrics.json",
        )
        outputs.append(out / "metrics.json")
    _report(outputs)
    return 0


def _plan_request(args, cfg: MissionConfig) -> PlanRequest:
    d = {}
    if args.request:
        try:
            d = json.loads(_existing(args.request).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.request}: line {exc.lineno}: {exc.msg}") from exc
    d = {**cfg.planner, **d}
    flags = {
        "labels_path": args.labels,
        "dem_path": args.dem,
        "start": _xy(args.start),
        "goal": _xy(args.goal),
        "weights": _floats(args.weights, 3),
        "base_step": args.base_step,
        "heuristic": args.heuristic,
        "dilation_radius": args.dilation_radius,
        "obstacles_path": args.obstacles,
    }
    d.update({k: v for k, v in flags.items() if v is not None})
    req = PlanRequest.from_dict(d)
    _existing(req.labels_path)
    return req


def cmd_plan(args, cfg: MissionConfig) -> int:
    req = _plan_request(args, cfg)
    labels = read_ascii_grid(req.labels_path, "label")
    dem = read_ascii_grid(_existing(req.dem_path), "elevation") if req.dem_path else None
    grid = PlanGrid.from_labels(labels, dem)
    if req.obstacles_path:
        scene = TrueScene(dem if dem is not None else labels.with_data(np.zeros(labels.shape), "elevation", None), labels, read_obstacle_script(_existing(req.obstacles_path)))
        grid = remove_obstacle_nodes(grid, [tuple(rc) for rc in scene.obstacle_cells()], req.dilation_radius)
    gt = labels.transform
    sc, sr = world_to_cell(gt, *req.start)
    gc, gr = world_to_cell(gt, *req.goal)
    weights = CostWeights(req.weights, req.base_step)
    t0 = time.perf_counter()
    path = astar(grid, weights, (int(sr), int(sc)), (int(gr), int(gc)), req.heuristic, args.heuristic_scale)
    log.info("planned %d nodes in %.3f s", len(path), time.perf_counter() - t0)
    out = _out_dir(args, cfg)
    write_path_json(out / "path.json", grid, path)
    base = read_ppm(_existing(args.ortho)) if args.ortho else labels
    write_ppm(path_overlay(base, path.nodes, grid.removed, path.nodes[0], path.nodes[-1]), out / "path_overlay.ppm")
    _report([out / "path.json", out / "path_overlay.ppm"])
    return 0


def _sim_one(job) -> dict:
    """Run and write one seeded mission; returns its summary."""
    seed, scene_dir, out, setup = job
    dem = read_ascii_grid(Path(scene_dir) / "dem.asc", "elevation")
    labels = read_ascii_grid(Path(scene_dir) / "labels.asc", "label")
    obstacles = read_obstacle_script(setup["obstacles_path"]) if setup["obstacles_path"] else []
    sources = read_sources_json(setup["sources_path"])
    scene = TrueScene(dem, labels, obstacles)
    grid = PlanGrid.from_labels(labels, dem)
    gt = labels.transform
    sc, sr = world_to_cell(gt, *setup["start"])
    pc, pr = world_to_cell(gt, *setup["poi"])
    start = nearest_traversable(grid, (int(sr), int(sc)))
    poi = nearest_traversable(grid, (int(pr), int(pc)))
    det = DetectorModel(setup["background_rate"], setup["sensitivity_k"])
    ucfg = UgvConfig.from_dict(setup["ugv"])
    mlog = run_mission(scene, grid, start, poi, det, sources, ucfg, np.random.default_rng(seed))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mission.jsonl").write_text(mlog.to_jsonl())
    write_ascii_grid(mlog.dem.export(), out / "dem_lidar.asc")
    write_ascii_grid(mlog.labels, out / "labels_updated.asc")
    summary = mission_summary(mlog)
    summary.update(seed=seed, start=[start[1], start[0]], poi=[poi[1], poi[0]])
    _dump(summary, out / "summary.json")
    return summary


def mission_summary(mlog) -> dict:
    traj = np.array(mlog.trajectory, dtype=float).reshape(-1, 4)
    cnt = np.array(mlog.counts, dtype=float).reshape(-1, 4)
    summary = {
        "schema": SCHEMAS["sim_summary"],
        "aborted": mlog.aborted,
        "events": mlog.event_types(),
        "n_counts": len(cnt),
        "duration": float(traj[-1, 0]) if len(traj) else 0.0,
    }
    ev = {e["type"]: e["t"] for e in mlog.events}
    if len(cnt) and "dwell_start" in ev and "dwell_end" in ev:
        dwell = (cnt[:, 0] > ev["dwell_start"]) & (cnt[:, 0] <= ev["dwell_end"])
        enroute = cnt[:, 0] <= ev["dwell_start"]
        summary["dwell_mean"] = float(cnt[dwell, 1].mean()) if dwell.any() else None
        summary["enroute_mean"] = float(cnt[enroute, 1].mean()) if enroute.any() else None
    if len(cnt) > 2:
        d = np.interp(cnt[:, 0], traj[:, 0], traj[:, 3])
        if np.std(d) > 0 and np.std(cnt[:, 1]) > 0:
            summary["corr_counts_neg_distance"] = float(np.corrcoef(cnt[:, 1], -d)[0, 1])
    return summary


def cmd_sim(args, cfg: MissionConfig) -> int:
    scene_dir = args.scene or cfg.scene.get("dir")
    if scene_dir is None:
        raise ConfigError("sim needs --scene (directory with dem.asc and labels.asc)")
    scene_dir = _existing(scene_dir)
    for name in ("dem.asc", "labels.asc"):
        _existing(Path(scene_dir) / name)
    sources_path = args.sources or cfg.sources_path
    if sources_path is None:
        raise ConfigError("sim needs --sources")
    _existing(sources_path)
    obstacles_path = args.obstacles or cfg.obstacles_path
    if obstacles_path:
        _existing(obstacles_path)
    start = _xy(args.start)
    if start is None:
        truth = Path(scene_dir) / "truth.json"
        if not truth.is_file():
            raise ConfigError("sim needs --start when the scene has no truth.json")
        start = tuple(json.loads(truth.read_text())["start_world"])
    if args.poi:
        poi = _xy(args.poi)
    elif args.measurements:
        _, pos, _ = max_counts_poi(read_measurements_csv(_existing(args.measurements)))
        poi = (pos[0], pos[1])
    else:
        raise ConfigError("sim needs --poi or --measurements")
    det = _detector(args, cfg.detector, UGV_LAB_BACKGROUND, ugv=True)
    ugv = dict(cfg.ugv)
    for key, flag in (
        ("speed", args.speed),
        ("dt", args.dt),
        ("dwell_s", args.dwell),
        ("lidar_range", args.lidar_range),
        ("n_rays", args.n_rays),
        ("grad_tau", args.grad_tau),
        ("lookahead_m", args.lookahead),
        ("dilation_radius", args.dilation_radius),
    ):
        if flag is not None:
            ugv[key] = flag
    if "weights" in cfg.planner:
        ugv.setdefault("weights", cfg.planner["weights"])
    UgvConfig.from_dict(ugv)  # validate before fanning out
    setup = {
        "sources_path": str(sources_path),
        "obstacles_path": str(obstacles_path) if obstacles_path else None,
        "start": start,
        "poi": poi,
        "background_rate": det.background_rate,
        "sensitivity_k": det.sensitivity_k,
        "ugv": ugv,
    }
    if args.seeds:
        seeds = parse_seeds(args.seeds)
    else:
        seeds = [_seed(args, cfg)]
    out = _out_dir(args, cfg)
    if len(seeds) == 1 and not args.seeds:
        summaries = [_sim_one((seeds[0], scene_dir, out, setup))]
        outputs = [out / n for n in ("mission.jsonl", "dem_lidar.asc", "labels_updated.asc", "summary.json")]
    else:
        jobs = [(s, scene_dir, out / f"seed_{s}", setup) for s in seeds]
        if args.workers > 1:
            with ProcessPoolExecutor(args.workers) as ex:
                summaries = list(ex.map(_sim_one, jobs))
        else:
            summaries = [_sim_one(j) for j in jobs]
        summaries.sort(key=lambda s: s["seed"])
        _dump({"schema": SCHEMAS["sim_summary"], "missions": summaries}, out / "summary.json")
        outputs = [out / f"seed_{s}" for s in seeds] + [out / "summary.json"]
    _report(outputs)
    aborted = [s["seed"] for s in summaries if s["aborted"]]
    if aborted:
        _error("mission_abort", f"mission aborted for seeds {aborted}", 3)
        return 3
    return 0


def cmd_report(args, cfg: MissionConfig) -> int:
    out = _out_dir(args, cfg)
    outputs = []
    if args.measurements:
        ms = read_measurements_csv(_existing(args.measurements))
        (out / "histogram.svg").write_text(histogram_svg([m.counts for m in ms], args.bin_width))
        outputs.append(out / "histogram.svg")
    if args.mission_log:
        rec = read_mission_jsonl(_existing(args.mission_log))
        svg = counts_time_svg(
            [r["t"] for r in rec["counts"]],
            [r["counts"] for r in rec["counts"]],
            [r["t"] for r in rec["trajectory"]],
            [r["distance_to_goal"] for r in rec["trajectory"]],
        )
        (out / "counts_time.svg").write_text(svg)
        outputs.append(out / "counts_time.svg")
    if args.path:
        if not (args.labels or args.ortho):
            raise ConfigError("path overlay needs --labels or --ortho")
        base = read_ppm(_existing(args.ortho)) if args.ortho else read_ascii_grid(_existing(args.labels), "label")
        p = json.loads(_existing(args.path).read_text())
        nodes = [(r, c) for c, r in p["pixels"]]
        obstacles = None
        if args.obstacles:
            dummy = Raster(np.zeros(base.shape), base.transform, None, "elevation")
            obstacles = TrueScene(dummy, dummy, read_obstacle_script(_existing(args.obstacles))).obstacle_cells()
        img = path_overlay(base, nodes, obstacles, nodes[0] if nodes else None, nodes[-1] if nodes else None)
        write_ppm(img, out / "path_overlay.ppm")
        outputs.append(out / "path_overlay.ppm")
    if not outputs:
        raise ConfigError("report needs at least one of --measurements, --mission-log, --path")
    _report(outputs)
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="radsearch", description="Aerial-survey to ground-vehicle radiation search simulator.")
    p.add_argument("--version", action="store_true", help="print schema versions and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--config", help="JSON config; flags override its values")
        sp.add_argument("--out", help="output directory (else $RADSEARCH_OUT, config out_dir, ./out)")
        if seed:
            sp.add_argument("--seed", type=int)

    sp = sub.add_parser("scene-gen", help="synthesize ortho.ppm, dem.asc, labels.asc and truth.json")
    common(sp)
    sp.add_argument("--width", type=int)
    sp.add_argument("--height", type=int)
    sp.add_argument("--pixel-size", type=float)
    sp.add_argument("--n-buildings", type=int)
    sp.add_argument("--n-vehicles", type=int)
    sp.add_argument("--n-trees", type=int)
    sp.set_defaults(func=cmd_scene_gen)

    sp = sub.add_parser("survey", help="fly a boustrophedon survey and log measurements")
    common(sp)
    sp.add_argument("--plan", help="plan JSON")
    sp.add_argument("--mission", type=int, choices=(1, 2), help="reference mission preset (plan, sources, background)")
    sp.add_argument("--sources", help="sources JSON")
    sp.add_argument("--scene", help="scene directory (checked for dem.asc and labels.asc)")
    sp.add_argument("--background-rate", type=float)
    sp.add_argument("--k", type=float, help="detector sensitivity (default: calibrated fit)")
    sp.add_argument("--background-only", action="store_true", help="zero sensitivity, as a background flight")
    sp.set_defaults(func=cmd_survey)

    sp = sub.add_parser("analyze", help="t-test against a background flight and point-of-interest extraction")
    common(sp, seed=False)
    sp.add_argument("--measurements", required=True)
    sp.add_argument("--background", required=True)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--test", choices=("welch", "paired"), default="welch")
    sp.add_argument("--near", help="x,y for a nearest-k median")
    sp.add_argument("--k", type=int, default=10)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("refine", help="DEM-based refinement of 2D labels")
    common(sp)
    sp.add_argument("--dem", required=True)
    sp.add_argument("--unaries", help="directory of unary_c{0..5}.asc")
    sp.add_argument("--labels", help="2D labels (default: argmax of unaries)")
    sp.add_argument("--truth", help="truth labels, for metrics and synthetic unaries")
    sp.add_argument("--noise", type=float, help="synthesize unaries from --truth at this noise level")
    sp.add_argument("--confusers", choices=("building", "uniform"), default="building")
    sp.add_argument("--tau", help="gradient threshold or 'auto'")
    sp.add_argument("--n-close", type=int, default=2)
    sp.add_argument("--min-height", type=float, default=0.5, help="minimum height above surrounding ground (m)")
    sp.set_defaults(func=cmd_refine)

    sp = sub.add_parser("plan", help="segmentation-weighted A* between two world points")
    common(sp, seed=False)
    sp.add_argument("--request", help="plan request JSON")
    sp.add_argument("--labels")
    sp.add_argument("--dem")
    sp.add_argument("--ortho", help="orthophoto for the overlay (default: label colours)")
    sp.add_argument("--start", help="x,y world meters")
    sp.add_argument("--goal", help="x,y world meters")
    sp.add_argument("--weights", help="w1,w2,w3")
    sp.add_argument("--base-step", type=float)
    sp.add_argument("--heuristic", choices=("euclidean", "zero"))
    sp.add_argument("--heuristic-scale", type=float, default=1.0)
    sp.add_argument("--dilation-radius", type=int)
    sp.add_argument("--obstacles", help="obstacle script JSON whose cells are removed")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("sim", help="ground-vehicle confirmation mission")
    common(sp)
    sp.add_argument("--seeds", help="seed range a..b (inclusive); outputs go to seed_<n>/")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--scene", help="scene directory")
    sp.add_argument("--sources", help="sources JSON (z is height above ground)")
    sp.add_argument("--obstacles", help="runtime obstacle script JSON")
    sp.add_argument("--start", help="x,y (default: scene truth start)")
    sp.add_argument("--poi", help="x,y goal")
    sp.add_argument("--measurements", help="survey measurements; goal = max-counts position")
    sp.add_argument("--background-rate", type=float)
    sp.add_argument("--k", type=float)
    sp.add_argument("--speed", type=float)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--dwell", type=float)
    sp.add_argument("--lidar-range", type=float)
    sp.add_argument("--n-rays", type=int)
    sp.add_argument("--grad-tau", type=float)
    sp.add_argument("--lookahead", type=float)
    sp.add_argument("--dilation-radius", type=int)
    sp.set_defaults(func=cmd_sim)

    sp = sub.add_parser("report", help="SVG plots and PPM path overlay")
    common(sp, seed=False)
    sp.add_argument("--measurements", help="measurements CSV for the counts histogram")
    sp.add_argument("--bin-width", type=float, default=10.0)
    sp.add_argument("--mission-log", help="mission JSONL for counts over time")
    sp.add_argument("--path", help="path JSON for the overlay")
    sp.add_argument("--labels")
    sp.add_argument("--ortho")
    sp.add_argument("--obstacles")
    sp.set_defaults(func=cmd_report)
    return p


def _error(code: str, message: str, exit_code: int):
    sys.stderr.write(json.dumps({"error": code, "message": message, "exit_code": exit_code}) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        if args.version:
            print(json.dumps(SCHEMAS, indent=2, sort_keys=True))
            return 0
        if args.command is None:
            parser.print_help(sys.stderr)
            return 2
        cfg = MissionConfig.load(args.config)
        return args.func(args, cfg)
    except RadSearchError as exc:
        _error(exc.code, str(exc), exc.exit_code)
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        _error("io", str(exc), 4)
        return 4


if __name__ == "__main__":
    sys.exit(main())
