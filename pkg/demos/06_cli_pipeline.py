"""
End-to-end command line run
===========================

The same pipeline through the ``radsearch`` command: scene, survey,
analysis, refinement, plan, mission and plots.
"""

import json
import subprocess
import sys
from pathlib import Path

out = Path("demo_out/cli")
out.mkdir(parents=True, exist_ok=True)
(out / "sources.json").write_text(json.dumps([{"nuclide": "Cs-137", "activity_uci": 100.0, "x": 216.6, "y": 132.0, "z": 1.0}]))


def radsearch(*args):
    cmd = [sys.executable, "-m", "radsearch.cli", *map(str, args)]
    print("$ radsearch", " ".join(map(str, args)))
    subprocess.run(cmd, check=True)


radsearch("scene-gen", "--seed", 0, "--out", out / "scene")
radsearch("survey", "--mission", 1, "--seed", 1, "--out", out / "survey")
radsearch("survey", "--mission", 1, "--seed", 2, "--background-only", "--out", out / "background")
radsearch("analyze", "--measurements", out / "survey/measurements.csv", "--background", out / "background/measurements.csv", "--out", out / "analysis")
radsearch("refine", "--dem", out / "scene/dem.asc", "--truth", out / "scene/labels.asc", "--noise", 0.6, "--seed", 3, "--out", out / "refine")
radsearch("plan", "--labels", out / "refine/labels_refined.asc", "--start", "0,132", "--goal", "216.6,132", "--ortho", out / "scene/ortho.ppm", "--out", out / "plan")
radsearch("sim", "--scene", out / "scene", "--sources", out / "sources.json", "--poi", "216.6,132", "--seed", 4, "--dwell", 30, "--out", out / "sim")
radsearch("report", "--measurements", out / "survey/measurements.csv", "--mission-log", out / "sim/mission.jsonl", "--out", out / "report")
print(json.loads((out / "analysis/analysis.json").read_text())["t_test"])
