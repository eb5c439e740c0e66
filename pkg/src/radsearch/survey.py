"""Boustrophedon aerial survey planning and simulated data collection."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ParameterError
from .radiation import DetectorModel, Measurement, RadSource, sample_measurements


@dataclass(frozen=True)
class SurveyPlan:
    aoi: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    altitude: float = 30.0
    line_spacing: float = 4.0
    speed: float = 3.0
    sample_hz: float = 1.0
    heading: str = "x"

    def __post_init__(self):
        xmin, ymin, xmax, ymax = (float(v) for v in self.aoi)
        object.__setattr__(self, "aoi", (xmin, ymin, xmax, ymax))
        if not (xmax >= xmin and ymax >= ymin):
            raise ParameterError(f"aoi corners out of order: {self.aoi}")
        for name in ("altitude", "line_spacing", "speed", "sample_hz"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.heading not in ("x", "y"):
            raise ParameterError(f"heading must be 'x' or 'y', got {self.heading!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aoi"] = list(self.aoi)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SurveyPlan":
        try:
            return cls(
                aoi=tuple(d["aoi"]),
                altitude=float(d.get("altitude", 30.0)),
                line_spacing=float(d.get("line_spacing", 4.0)),
                speed=float(d.get("speed", 3.0)),
                sample_hz=float(d.get("sample_hz", 1.0)),
                heading=d.get("heading", "x"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad survey plan: {exc}") from exc


def read_plan_json(path) -> SurveyPlan:
    try:
        return SurveyPlan.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise FormatError(str(exc), exc.lineno, path) from exc


def write_plan_json(plan: SurveyPlan, path):
    Path(path).write_text(json.dumps(plan.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class CameraFootprint:
    fov_along: float  # half-angle, radians
    fov_across: float

    def __post_init__(self):
        for a in (self.fov_along, self.fov_across):
            if not 0 < a < math.pi / 2:
                raise ParameterError(f"half-angle must lie in (0, pi/2), got {a}")

    def footprint(self, altitude: float) -> tuple[float, float]:
        """Ground ``(along, across)`` extent of one nadir image at ``altitude``."""
        return 2 * altitude * math.tan(self.fov_along), 2 * altitude * math.tan(self.fov_across)


def line_offsets(lo: float, hi: float, spacing: float) -> np.ndarray:
    """Centered line positions: ceil(width / spacing) lines, equal margins at both edges."""
    width = hi - lo
    n = max(1, math.ceil(width / spacing - 1e-12))
    margin = (width - (n - 1) * spacing) / 2
    return lo + margin + spacing * np.arange(n)


def generate_scanlines(plan: SurveyPlan) -> np.ndarray:
    """Waypoints ``(n, 3)``: start/end of each line, alternating direction."""
    xmin, ymin, xmax, ymax = plan.aoi
    if plan.heading == "x":
        offs = line_offsets(ymin, ymax, plan.line_spacing)
        ends = [((xmin, o), (xmax, o)) for o in offs]
    else:
        offs = line_offsets(xmin, xmax, plan.line_spacing)
        ends = [((o, ymin), (o, ymax)) for o in offs]
    wps = []
    for i, (a, b) in enumerate(ends):
        if i % 2:
            a, b = b, a
        wps.append((*a, plan.altitude))
        wps.append((*b, plan.altitude))
    return np.array(wps, dtype=float)


def path_length(waypoints) -> float:
    w = np.asarray(waypoints, dtype=float)
    if len(w) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(w, axis=0), axis=1)))


def sample_along(waypoints, speed: float, sample_hz: float):
    """Times and positions at every ``1/sample_hz`` seconds along the polyline."""
    w = np.asarray(waypoints, dtype=float)
    seg = np.linalg.norm(np.diff(w, axis=0), axis=1) if len(w) > 1 else np.zeros(0)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total_t = cum[-1] / speed
    n = int(math.floor(total_t * sample_hz + 1e-9)) + 1
    times = np.arange(n) / sample_hz
    s = np.minimum(times * speed, cum[-1])
    if len(w) == 1 or cum[-1] == 0:
        return times, np.repeat(w[:1], n, axis=0)
    # index of the segment holding arc length s; zero-length segments are skipped by searchsorted
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = np.where(seg[k] > 0, (s - cum[k]) / np.where(seg[k] > 0, seg[k], 1.0), 0.0)
    pos = w[k] + frac[:, None] * (w[k + 1] - w[k])
    return times, pos


@dataclass
class SurveyResult:
    measurements: list[Measurement]
    captures: np.ndarray  # (n, 4): t, x, y, z
    waypoints: np.ndarray


def run_survey(
    plan: SurveyPlan,
    detector: DetectorModel,
    sources: list[RadSource],
    rng: np.random.Generator,
    waypoints=None,
) -> SurveyResult:
    """Fly the plan, logging one measurement and one image capture per sample tick."""
    wps = generate_scanlines(plan) if waypoints is None else np.asarray(waypoints, dtype=float)
    times, pos = sample_along(wps, plan.speed, plan.sample_hz)
    ms = sample_measurements(rng, detector, sources, [tuple(p) for p in pos], times)
    captures = np.column_stack([times, pos])
    return SurveyResult(ms, captures, wps)


def overlap_from_distance(capture_spacing: float, footprint_length: float) -> float:
    if footprint_length <= 0:
        return 0.0
    return float(min(1.0, max(0.0, 1.0 - capture_spacing / footprint_length)))


def overlap_fraction(plan: SurveyPlan, cam: CameraFootprint) -> float:
    """Forward overlap between consecutive images."""
    along, _ = cam.footprint(plan.altitude)
    return overlap_from_distance(plan.speed / plan.sample_hz, along)


def write_captures_csv(captures, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "x", "y", "z"])
        for row in np.asarray(captures):
            wr.writerow([repr(float(v)) for v in row])
