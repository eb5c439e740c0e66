"""
Aerial radiation surveys
========================

Fly the two reference missions over their source layouts, test each
flight against a background flight, and pick the point of interest.
"""

import math
from pathlib import Path

import numpy as np

from radsearch.missions import (
    MISSION1_SITE,
    MISSION2_BACS_SITE,
    MISSION2_HO_SITE,
    calibrate,
    mission1_sources,
    mission2_sources,
    mission_detector,
    mission_plan,
)
from radsearch.radiation import max_counts_poi, median_nearest_k, welch_t_test
from radsearch.report import histogram_svg
from radsearch.survey import generate_scanlines, path_length, run_survey

out = Path("demo_out")
out.mkdir(exist_ok=True)

cal = calibrate()
print(f"fitted aerial sensitivity k = {cal.sensitivity_k:.1f}, ground k = {cal.ugv_sensitivity_k:.1f}")

plan = mission_plan(1)
print("mission 1 path length", round(path_length(generate_scanlines(plan)), 1), "m")
src = run_survey(plan, mission_detector(1, cal), mission1_sources(), np.random.default_rng(0)).measurements
bg = run_survey(plan, mission_detector(1, cal, background_only=True), [], np.random.default_rng(1)).measurements
tt = welch_t_test([m.counts for m in src], [m.counts for m in bg])
i, pos, c = max_counts_poi(src)
print(f"mission 1: t={tt.t_stat:.2f} p={tt.p_value:.2e} reject={tt.reject}")
print(f"  POI at {pos[:2]} ({c} counts), {math.dist(pos[:2], MISSION1_SITE):.1f} m from the sources")
(out / "mission1_histogram.svg").write_text(histogram_svg([m.counts for m in src], 10))

# mission 2: the weak Ba-133 + Cs-137 stand is lost next to the Ho-166m pair
ms = run_survey(mission_plan(2), mission_detector(2, cal), mission2_sources(), np.random.default_rng(2)).measurements
_, pos2, _ = max_counts_poi(ms)
print("mission 2 POI", pos2[:2])
print("  distance to Ho stand", round(math.dist(pos2[:2], MISSION2_HO_SITE), 1), "to Ba+Cs stand", round(math.dist(pos2[:2], MISSION2_BACS_SITE), 1))
print("  nearest-10 medians: Ho", median_nearest_k(ms, MISSION2_HO_SITE, 10), "Ba+Cs", median_nearest_k(ms, MISSION2_BACS_SITE, 10))
