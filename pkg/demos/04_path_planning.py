"""
Segmentation-weighted planning
==============================

Plan from the entry road to the far side of the campus, compare the two
heuristics, and draw the result over the orthophoto.
"""

import time
from pathlib import Path

import numpy as np

from radsearch.geo import write_ppm
from radsearch.planner import CostWeights, PlanGrid, astar, remove_obstacle_nodes
from radsearch.report import path_overlay
from radsearch.scene import SceneConfig, generate_scene
from radsearch.segmentation import ROAD

out = Path("demo_out")
out.mkdir(exist_ok=True)

scene = generate_scene(SceneConfig(seed=0))
grid = PlanGrid.from_labels(scene.labels, scene.dem)
goal = (330, 360)
print("goal on road:", scene.labels.data[goal] == ROAD, "grid nodes:", scene.labels.data.size)

for h in ("euclidean", "zero"):
    t0 = time.perf_counter()
    p = astar(grid, CostWeights(), scene.start, goal, heuristic=h)
    road = np.mean([scene.labels.data[n] == ROAD for n in p.nodes])
    print(f"{h:9s} cost {p.cost:8.2f}  nodes {len(p):4d}  expanded {p.expansions:6d}  road {road:.2f}  {time.perf_counter() - t0:.2f} s")

# drop a blocked patch on the path and replan
p = astar(grid, CostWeights(), scene.start, goal)
blocked = remove_obstacle_nodes(grid, [p.nodes[len(p) // 3]], dilation_radius=6)
p2 = astar(blocked, CostWeights(), scene.start, goal)
print("after blocking: cost", round(p2.cost, 2), "nodes", len(p2))
write_ppm(path_overlay(scene.ortho, p2.nodes, blocked.removed, p2.nodes[0], p2.nodes[-1]), out / "plan_overlay.ppm")
