"""Reference source inventory, mission layouts and detector calibration.

Published statistics used here (counts per one-second integration):

* aerial detector background 436.1 +/- 20.8 in the lab, 739.7 with a source
  beside it; ground-vehicle detector 1469.4 and 1956.5 under the same setup
* Mission 1 flights: background mean 558, source flight 606.7
* Mission 2 flights: background mean 593.9, source flight 617.6; the ten
  measurements closest to the Ho-166m pair have median 658, and those closest
  to the Ba-133 + Cs-137 stand have median 617.5
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .radiation import DetectorModel, RadSource, expected_rate
from .survey import SurveyPlan, sample_along, generate_scanlines

LAB_BACKGROUND = 436.1
LAB_BACKGROUND_SIGMA = 20.8
LAB_SOURCE = 739.7
UGV_LAB_BACKGROUND = 1469.4
UGV_LAB_SOURCE = 1956.5

MISSION1_BACKGROUND = 558.0
MISSION1_SOURCE_MEAN = 606.7
MISSION2_BACKGROUND = 593.9
MISSION2_SOURCE_MEAN = 617.6
MISSION2_HO_MEDIAN10 = 658.0
MISSION2_BACS_MEDIAN10 = 617.5

SOURCE_STAND_HEIGHT = 1.0

# nuclide, half-life (yr), activity (uCi)
SOURCE_TABLE = (
    ("Cs-137", 30.2, 10.0),
    ("Ba-133", 10.7, 16.1),
    ("Ho-166m", 1200.0, 138.7),
    ("Ho-166m", 1200.0, 147.1),
)

# survey areas sized so the flights last roughly as long as the 874 and 770
# image captures of the two reference missions
MISSION1_AOI = (0.0, 0.0, 100.0, 104.0)
MISSION1_SITE = (50.3, 52.1)
MISSION2_AOI = (0.0, 0.0, 96.0, 92.0)
MISSION2_HO_SITE = (28.4, 61.7)
MISSION2_BACS_SITE = (69.1, 27.3)


def _sources_at(entries, xy, z=SOURCE_STAND_HEIGHT):
    return [RadSource(n, a, (xy[0], xy[1], z), hl) for n, hl, a in entries]


def mission1_sources() -> list[RadSource]:
    """All four sources on one stand."""
    return _sources_at(SOURCE_TABLE, MISSION1_SITE)


def mission2_sources() -> list[RadSource]:
    """Both Ho-166m sources on one stand, Ba-133 and Cs-137 on another."""
    ho = [e for e in SOURCE_TABLE if e[0] == "Ho-166m"]
    bacs = [e for e in SOURCE_TABLE if e[0] != "Ho-166m"]
    return _sources_at(ho, MISSION2_HO_SITE) + _sources_at(bacs, MISSION2_BACS_SITE)


def mission_plan(mission: int) -> SurveyPlan:
    aoi = {1: MISSION1_AOI, 2: MISSION2_AOI}[mission]
    return SurveyPlan(aoi=aoi, altitude=30.0, line_spacing=4.0, speed=3.0, sample_hz=1.0)


def fit_sensitivity_k(target_median: float = MISSION2_HO_MEDIAN10, k_nearest: int = 10) -> float:
    """Scale factor that puts the noise-free median of the ``k_nearest`` Mission-2
    samples around the Ho-166m stand at ``target_median``.

    The expected rate at each sample is ``background + k * S`` with ``S`` the
    activity-over-squared-distance sum, so the median is linear in ``k`` and
    the fit is closed form.
    """
    plan = mission_plan(2)
    _, pos = sample_along(generate_scanlines(plan), plan.speed, plan.sample_hz)
    unit = DetectorModel(MISSION2_BACKGROUND, 1.0)
    srcs = mission2_sources()
    d = np.hypot(pos[:, 0] - MISSION2_HO_SITE[0], pos[:, 1] - MISSION2_HO_SITE[1])
    near = np.argsort(d, kind="stable")[:k_nearest]
    s = np.array([expected_rate(unit, srcs, pos[i]) - MISSION2_BACKGROUND for i in near])
    return (target_median - MISSION2_BACKGROUND) / float(np.median(s))


def ugv_sensitivity_ratio() -> float:
    """Ground detector response relative to the aerial one, from the lab source tests."""
    return (UGV_LAB_SOURCE - UGV_LAB_BACKGROUND) / (LAB_SOURCE - LAB_BACKGROUND)


@dataclass(frozen=True)
class Calibration:
    sensitivity_k: float
    ugv_sensitivity_k: float

    def aerial(self, background_rate: float) -> DetectorModel:
        return DetectorModel(background_rate, self.sensitivity_k)

    def ugv(self, background_rate: float = UGV_LAB_BACKGROUND) -> DetectorModel:
        return DetectorModel(background_rate, self.ugv_sensitivity_k)


def calibrate() -> Calibration:
    k = fit_sensitivity_k()
    return Calibration(k, k * ugv_sensitivity_ratio())


def mission_detector(mission: int, cal: Calibration | None = None, background_only=False) -> DetectorModel:
    cal = cal or calibrate()
    bg = {1: MISSION1_BACKGROUND, 2: MISSION2_BACKGROUND}[mission]
    return DetectorModel(bg, 0.0 if background_only else cal.sensitivity_k)
