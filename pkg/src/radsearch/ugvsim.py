"""Ground-vehicle mission: path following, simulated LiDAR, gradient obstacle
detection, map update and replanning, LiDAR DEM accumulation, dwell and return.

Radiation positions in this module use height above local ground for ``z``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import BoundsError, ConfigError, EndpointError, FormatError, NoPathError, ParameterError
from .geo import DEFAULT_NODATA, GeoTransform, Raster, pixel_to_world, world_to_cell
from .planner import CostWeights, PlanGrid, astar, chebyshev_dilate, remove_obstacle_nodes
from .radiation import DetectorModel, RadSource, sample_measurement
from .segmentation import VEHICLE

MAX_SPEED = 4.5
SCHEMA = "radsearch.missionlog/1"


@dataclass(frozen=True)
class RuntimeObstacle:
    """Object placed after the aerial survey; ``x, y`` is its center in world meters."""

    shape: str
    x: float
    y: float
    height: float
    w: float = 0.0
    h: float = 0.0
    radius: float = 0.0
    appears_at: float = 0.0

    def __post_init__(self):
        if self.shape not in ("disc", "rect"):
            raise ParameterError(f"obstacle shape must be 'disc' or 'rect', got {self.shape!r}")
        if not self.height > 0:
            raise ParameterError("obstacle height must be positive")
        if self.shape == "disc" and not self.radius > 0:
            raise ParameterError("disc obstacle needs a positive radius")
        if self.shape == "rect" and not (self.w > 0 and self.h > 0):
            raise ParameterError("rect obstacle needs positive w and h")

    def contains(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if self.shape == "disc":
            return (xs - self.x) ** 2 + (ys - self.y) ** 2 <= self.radius**2
        return (np.abs(xs - self.x) <= self.w / 2) & (np.abs(ys - self.y) <= self.h / 2)

    def to_dict(self) -> dict:
        d = {"shape": self.shape, "x": self.x, "y": self.y, "height": self.height, "appears_at": self.appears_at}
        if self.shape == "disc":
            d["radius"] = self.radius
        else:
            d["w"], d["h"] = self.w, self.h
        return d


def read_obstacle_script(path) -> list[RuntimeObstacle]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
        return [
            RuntimeObstacle(
                d["shape"],
                float(d["x"]),
                float(d["y"]),
                float(d["height"]),
                float(d.get("w", 0.0)),
                float(d.get("h", 0.0)),
                float(d.get("radius", 0.0)),
                float(d.get("appears_at", 0.0)),
            )
            for d in payload
        ]
    except json.JSONDecodeError as exc:
        raise FormatError(str(exc), exc.lineno, path) from exc
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad obstacle script: {exc}", path=path) from exc


def write_obstacle_script(obstacles: Sequence[RuntimeObstacle], path):
    Path(path).write_text(json.dumps([o.to_dict() for o in obstacles], indent=2) + "\n")


@dataclass
class TrueScene:
    dem: Raster
    labels: Raster
    obstacles: list[RuntimeObstacle] = field(default_factory=list)

    @property
    def transform(self) -> GeoTransform:
        return self.dem.transform

    def surface(self, xs, ys, t: float = math.inf):
        """First-surface height at world points; NaN outside the raster."""
        shape = np.shape(xs)
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        c, r = world_to_cell(self.transform, xs, ys)
        c, r = np.atleast_1d(c), np.atleast_1d(r)
        inside = (c >= 0) & (c < self.dem.width) & (r >= 0) & (r < self.dem.height)
        z = np.full(xs.shape, np.nan)
        z[inside] = self.dem.data[r[inside], c[inside]]
        for ob in self.obstacles:
            if ob.appears_at <= t:
                hit = inside & ob.contains(xs, ys)
                z[hit] = np.maximum(z[hit], self.dem.data[r[hit], c[hit]] + ob.height)
        return z.reshape(shape)

    def obstacle_cells(self, t: float = math.inf) -> np.ndarray:
        """``(row, col)`` of every pixel whose center lies inside a present obstacle."""
        X, Y = self.dem.cell_centers()
        mask = np.zeros(self.dem.shape, dtype=bool)
        for ob in self.obstacles:
            if ob.appears_at <= t:
                mask |= ob.contains(X, Y)
        return np.argwhere(mask)


@dataclass
class UgvState:
    pos: tuple[float, float]
    heading: float = 0.0
    speed: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.speed <= MAX_SPEED:
            raise ParameterError(f"speed must lie in [0, {MAX_SPEED}] m/s, got {self.speed}")
        self.pos = (float(self.pos[0]), float(self.pos[1]))


@dataclass
class FollowStep:
    state: UgvState
    remaining: list[tuple[float, float]]
    reached: list[tuple[float, float]]
    arrived: bool
    distance: float


def follow_path(state: UgvState, waypoints, dt: float, speed: float, capture_radius: float = 0.5) -> FollowStep:
    """Advance a point mass ``speed * dt`` meters along the waypoint polyline.

    Waypoints passed or within ``capture_radius`` of the new position count as
    reached.  ``arrived`` is set once no waypoints remain.
    """
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if not 0.0 <= speed <= MAX_SPEED:
        raise ParameterError(f"speed must lie in [0, {MAX_SPEED}] m/s")
    remaining = [tuple(map(float, w)) for w in waypoints]
    reached = []
    x, y = state.pos
    heading = state.heading
    budget = speed * dt
    moved = 0.0
    while remaining:
        wx, wy = remaining[0]
        d = math.hypot(wx - x, wy - y)
        if d <= budget:
            if d > 0:
                heading = math.atan2(wy - y, wx - x)
            x, y = wx, wy
            budget -= d
            moved += d
            reached.append(remaining.pop(0))
            continue
        if budget > 0:
            heading = math.atan2(wy - y, wx - x)
            x += budget / d * (wx - x)
            y += budget / d * (wy - y)
            moved += budget
            budget = 0.0
        break
    while remaining and math.hypot(remaining[0][0] - x, remaining[0][1] - y) <= capture_radius:
        reached.append(remaining.pop(0))
    new = UgvState((x, y), heading, speed if remaining else 0.0)
    return FollowStep(new, remaining, reached, not remaining, moved)


def lidar_scan(scene: TrueScene, pose, range_m: float, n_rays: int, t: float = math.inf, step: float | None = None) -> np.ndarray:
    """Sample first-surface heights along ``n_rays`` evenly spaced azimuths.

    ``pose`` is ``(x, y[, heading])``.  Samples are spaced ``step`` meters
    (half a pixel by default) out to ``range_m``; samples off the raster are
    dropped.  Returns world ``(x, y, z)`` rows.
    """
    if not range_m > 0:
        raise ParameterError("range_m must be positive")
    if n_rays < 8:
        raise ParameterError("need at least 8 rays")
    x0, y0 = float(pose[0]), float(pose[1])
    heading = float(pose[2]) if len(pose) > 2 else 0.0
    c, r = world_to_cell(scene.transform, x0, y0)
    if not scene.dem.contains(c, r):
        raise BoundsError(f"pose ({x0}, {y0}) lies outside the scene raster")
    step = step or scene.transform.pixel_size / 2
    radii = np.arange(1, int(math.floor(range_m / step + 1e-9)) + 1) * step
    az = heading + 2 * math.pi * np.arange(n_rays) / n_rays
    xs = x0 + np.cos(az)[:, None] * radii[None, :]
    ys = y0 + np.sin(az)[:, None] * radii[None, :]
    z = scene.surface(xs, ys, t)
    ok = ~np.isnan(z)
    return np.column_stack([xs[ok], ys[ok], z[ok]])


def rasterize_max(points: np.ndarray, cell_size: float, origin=(0.0, 0.0)):
    """Max height per cell on the lattice of cell centers ``origin + k * cell_size``.

    Returns ``(grid, col0, row0)``: unobserved cells are NaN and grid index
    ``[i, j]`` is lattice cell ``(col0 + j, row0 + i)``.
    """
    gt = GeoTransform(origin[0], origin[1], cell_size)
    cols, rows = world_to_cell(gt, points[:, 0], points[:, 1])
    cols, rows = np.atleast_1d(cols), np.atleast_1d(rows)
    c0, r0 = cols.min(), rows.min()
    grid = np.full((rows.max() - r0 + 1, cols.max() - c0 + 1), -np.inf)
    np.maximum.at(grid, (rows - r0, cols - c0), points[:, 2])
    grid[np.isneginf(grid)] = np.nan
    return grid, int(c0), int(r0)


def local_gradient(z: np.ndarray, cell_size: float) -> np.ndarray:
    """Gradient magnitude tolerant of unobserved (NaN) cells.

    Each axis uses a central difference when both neighbours are observed,
    otherwise a one-sided difference, otherwise zero.
    """
    gx = np.zeros_like(z)
    gy = np.zeros_like(z)
    for axis, g in ((1, gx), (0, gy)):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (1, 1)
        p = np.pad(z, pad, constant_values=np.nan)
        lo = p[:, :-2] if axis == 1 else p[:-2, :]
        hi = p[:, 2:] if axis == 1 else p[2:, :]
        both = ~np.isnan(lo) & ~np.isnan(hi)
        fwd = ~np.isnan(hi) & ~both
        bwd = ~np.isnan(lo) & ~both
        g[both] = (hi[both] - lo[both]) / (2 * cell_size)
        g[fwd] = (hi[fwd] - z[fwd]) / cell_size
        g[bwd] = (z[bwd] - lo[bwd]) / cell_size
    mag = np.hypot(gx, gy)
    mag[np.isnan(z) | np.isnan(mag)] = 0.0
    return mag


@dataclass
class ObstacleDetection:
    cells: np.ndarray  # world (x, y) centers of flagged cells
    heights: np.ndarray  # observed max height per flagged cell

    def __len__(self):
        return len(self.cells)


def detect_obstacles(points: np.ndarray, cell_size: float, grad_tau: float, origin=(0.0, 0.0)) -> ObstacleDetection:
    """Cells of a max-height grid steeper than ``grad_tau``, with enclosed holes filled."""
    empty = ObstacleDetection(np.zeros((0, 2)), np.zeros(0))
    if len(points) == 0:
        return empty
    z, c0, r0 = rasterize_max(np.asarray(points, dtype=float), cell_size, origin)
    if z.shape[0] < 2 and z.shape[1] < 2:
        return empty
    steep = local_gradient(z, cell_size) > grad_tau
    if not steep.any():
        return empty
    flagged = ndimage.binary_fill_holes(steep) & ~np.isnan(z)
    ii, jj = np.nonzero(flagged)
    xs = origin[0] + (jj + c0) * cell_size
    ys = origin[1] + (ii + r0) * cell_size
    return ObstacleDetection(np.column_stack([xs, ys]), z[ii, jj])


def update_global_map(
    grid: PlanGrid,
    labels: Raster,
    cells_xy,
    dilation_radius: int,
    code: int = VEHICLE,
) -> tuple[PlanGrid, Raster]:
    """Mark detected cells (and their dilation) non-traversable in both the planning grid and the segmentation."""
    cells_xy = np.asarray(cells_xy, dtype=float).reshape(-1, 2)
    if len(cells_xy) == 0:
        return grid, labels
    cols, rows = world_to_cell(labels.transform, cells_xy[:, 0], cells_xy[:, 1])
    cols, rows = np.atleast_1d(cols), np.atleast_1d(rows)
    H, W = labels.shape
    ok = (rows >= 0) & (rows < H) & (cols >= 0) & (cols < W)
    mask = np.zeros((H, W), dtype=bool)
    mask[rows[ok], cols[ok]] = True
    marked = chebyshev_dilate(mask, dilation_radius)
    new_labels = np.array(labels.data)
    new_labels[marked] = code
    new_grid = remove_obstacle_nodes(grid, zip(rows, cols), dilation_radius)
    return new_grid, Raster(new_labels, labels.transform, labels.nodata, "label")


class DemAccumulator:
    """Running per-cell mean of LiDAR heights on a fixed world lattice."""

    def __init__(self, transform: GeoTransform, shape):
        self.transform = transform
        self.sum = np.zeros(shape)
        self.count = np.zeros(shape, dtype=np.int64)

    def add(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            return self
        cols, rows = world_to_cell(self.transform, pts[:, 0], pts[:, 1])
        cols, rows = np.atleast_1d(cols), np.atleast_1d(rows)
        H, W = self.sum.shape
        ok = (rows >= 0) & (rows < H) & (cols >= 0) & (cols < W)
        np.add.at(self.sum, (rows[ok], cols[ok]), pts[ok, 2])
        np.add.at(self.count, (rows[ok], cols[ok]), 1)
        return self

    def export(self, nodata: float = DEFAULT_NODATA) -> Raster:
        out = np.full(self.sum.shape, nodata)
        seen = self.count > 0
        out[seen] = self.sum[seen] / self.count[seen]
        return Raster(out, self.transform, nodata, "elevation")


def accumulate_dem(acc: DemAccumulator, points) -> DemAccumulator:
    return acc.add(points)


# --------------------------------------------------------------------------
# mission loop
# --------------------------------------------------------------------------


@dataclass
class UgvConfig:
    dt: float = 0.1
    speed: float = 2.0
    capture_radius: float = 0.5
    lidar_range: float = 15.0
    n_rays: int = 360
    grad_tau: float = 0.5
    novelty_tol: float = 0.3
    lookahead_m: float = 10.0
    dilation_radius: int = 2
    dwell_s: float = 180.0
    sample_period: float = 1.0
    detector_height: float = 0.5
    obstacle_code: int = VEHICLE
    weights: CostWeights = field(default_factory=CostWeights)
    heuristic: str = "euclidean"
    max_time: float = 3600.0

    def __post_init__(self):
        if not 0 < self.speed <= MAX_SPEED:
            raise ConfigError(f"UGV speed must lie in (0, {MAX_SPEED}] m/s")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "UgvConfig":
        d = dict(d)
        w = d.pop("weights", None)
        base = d.pop("base_step", 0.0)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown UGV options: {sorted(unknown)}")
        cfg = cls(**d)
        if w is not None or base:
            cfg.weights = CostWeights(tuple(w or (5.0, 2.0, 5.0)), float(base))
        return cfg


@dataclass
class MissionLog:
    trajectory: list = field(default_factory=list)  # (t, x, y, distance_to_goal)
    counts: list = field(default_factory=list)  # (t, counts, x, y)
    events: list = field(default_factory=list)  # dicts with t and type
    outbound_waypoints: list = field(default_factory=list)
    return_waypoints: list = field(default_factory=list)
    dem: DemAccumulator | None = None
    grid_history: list = field(default_factory=list)  # (t, PlanGrid) in force from t on
    labels: Raster | None = None
    aborted: bool = False

    def event_types(self) -> list[str]:
        return [e["type"] for e in self.events]

    def grid_at(self, t: float) -> PlanGrid:
        current = self.grid_history[0][1]
        for t0, g in self.grid_history:
            if t0 <= t:
                current = g
        return current

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "header", "schema": SCHEMA})]
        merged = (
            [(t, 0, {"type": "trajectory", "t": t, "x": x, "y": y, "distance_to_goal": d}) for t, x, y, d in self.trajectory]
            + [(t, 1, {"type": "counts", "t": t, "counts": c, "x": x, "y": y}) for t, c, x, y in self.counts]
            + [(e["t"], 2, e) for e in self.events]
        )
        merged.sort(key=lambda item: (item[0], item[1]))
        lines += [json.dumps(rec) for _, _, rec in merged]
        return "\n".join(lines) + "\n"


def read_mission_jsonl(path) -> dict:
    """Group mission-log records by type: ``trajectory``, ``counts``, ``event`` plus the header."""
    path = Path(path)
    out = {"header": None, "trajectory": [], "counts": [], "event": []}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(exc.msg, lineno, path) from exc
            kind = rec.get("type")
            if kind == "header":
                if rec.get("schema") != SCHEMA:
                    raise FormatError(f"unsupported schema {rec.get('schema')!r}", lineno, path)
                out["header"] = rec
            elif kind in ("trajectory", "counts"):
                out[kind].append(rec)
            else:
                out["event"].append(rec)
    if out["header"] is None:
        raise FormatError("missing header record", 1, path)
    return out


def nearest_traversable(grid: PlanGrid, node) -> tuple[int, int]:
    trav = grid.traversable
    if not trav.any():
        raise EndpointError("grid has no traversable cells")
    r, c = node
    if grid.is_traversable((r, c)):
        return int(r), int(c)
    _, (ri, ci) = ndimage.distance_transform_edt(~trav, return_indices=True)
    rr = min(max(int(r), 0), trav.shape[0] - 1)
    cc = min(max(int(c), 0), trav.shape[1] - 1)
    return int(ri[rr, cc]), int(ci[rr, cc])


def _dist_to_polyline(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Minimum distance from each point to a polyline of world waypoints."""
    if len(poly) == 1:
        return np.hypot(pts[:, 0] - poly[0, 0], pts[:, 1] - poly[0, 1])
    a = poly[:-1][None, :, :]
    b = poly[1:][None, :, :]
    p = pts[:, None, :]
    ab = b - a
    denom = np.sum(ab * ab, axis=2)
    tt = np.where(denom > 0, np.sum((p - a) * ab, axis=2) / np.where(denom > 0, denom, 1), 0.0)
    tt = np.clip(tt, 0.0, 1.0)
    proj = a + tt[..., None] * ab
    return np.min(np.linalg.norm(p - proj, axis=2), axis=1)


def run_mission(
    scene: TrueScene,
    grid: PlanGrid,
    start,
    poi,
    detector: DetectorModel,
    sources: Sequence[RadSource],
    config: UgvConfig | None = None,
    rng: np.random.Generator | None = None,
) -> MissionLog:
    """Drive from ``start`` to ``poi`` (``(row, col)`` nodes), dwell, then retrace the outbound waypoints.

    Every control tick while outbound: scan, detect, and if a newly observed
    obstacle cell lies within ``lookahead_m`` of the remaining path, mark it
    in the map and replan from the current cell.  Radiation is sampled once
    per ``sample_period`` for the whole mission.
    """
    cfg = config or UgvConfig()
    if rng is None:
        raise ConfigError("run_mission needs an explicit random generator")
    gt = scene.transform
    ps = gt.pixel_size
    origin = (gt.origin_x, gt.origin_y)
    log = MissionLog(dem=DemAccumulator(gt, scene.dem.shape), labels=scene.labels)
    log.grid_history.append((0.0, grid))
    start = (int(start[0]), int(start[1]))
    poi = (int(poi[0]), int(poi[1]))
    goal_xy = np.array(pixel_to_world(gt, poi[1], poi[0]))
    labels = scene.labels
    t = 0.0
    step_i = 0
    state = UgvState(grid.node_to_world(start), 0.0, 0.0)

    def event(kind, **kw):
        log.events.append({"type": kind, "t": t, **kw})

    def ground_z(xy):
        c, r = world_to_cell(gt, xy[0], xy[1])
        return float(scene.dem.data[r, c])

    def radiation_sample():
        m = sample_measurement(rng, detector, sources, (state.pos[0], state.pos[1], cfg.detector_height), t)
        log.counts.append((t, m.counts, state.pos[0], state.pos[1]))

    def record():
        d = float(np.hypot(state.pos[0] - goal_xy[0], state.pos[1] - goal_xy[1]))
        log.trajectory.append((t, state.pos[0], state.pos[1], d))

    try:
        path = astar(grid, cfg.weights, start, poi, cfg.heuristic)
    except NoPathError as exc:
        event("abort", reason=str(exc))
        log.aborted = True
        return log
    event("planned", nodes=len(path), cost=path.cost)
    waypoints = [tuple(p) for p in path.world(grid)]
    record()
    next_sample = cfg.sample_period
    samples_per_tick = round(cfg.sample_period / cfg.dt)

    def tick():
        nonlocal t, step_i, next_sample
        step_i += 1
        t = step_i * cfg.dt
        if samples_per_tick and step_i % samples_per_tick == 0:
            radiation_sample()

    # outbound
    while True:
        pts = lidar_scan(scene, (*state.pos, state.heading), cfg.lidar_range, cfg.n_rays, t)
        log.dem.add(pts)
        det = detect_obstacles(pts, ps, cfg.grad_tau, origin)
        if len(det) and waypoints:
            cols, rows = world_to_cell(gt, det.cells[:, 0], det.cells[:, 1])
            cols, rows = np.atleast_1d(cols), np.atleast_1d(rows)
            inb = (rows >= 0) & (rows < grid.shape[0]) & (cols >= 0) & (cols < grid.shape[1])
            novel = np.zeros(len(det), dtype=bool)
            idx = np.nonzero(inb)[0]
            trav = grid.traversable[rows[idx], cols[idx]]
            prior = scene.dem.data[rows[idx], cols[idx]]
            novel[idx] = trav & (det.heights[idx] - prior > cfg.novelty_tol)
            if novel.any():
                poly = np.array([state.pos] + list(waypoints))
                near = _dist_to_polyline(det.cells[novel], poly) <= cfg.lookahead_m
                if near.any():
                    cells = det.cells[novel]
                    event("obstacle_detected", cells=int(len(cells)))
                    grid, labels = update_global_map(grid, labels, cells, cfg.dilation_radius, cfg.obstacle_code)
                    log.grid_history.append((t, grid))
                    cur = world_to_cell(gt, *state.pos)
                    cur = (cur[1], cur[0])
                    try:
                        path = astar(grid, cfg.weights, cur, poi, cfg.heuristic)
                    except (NoPathError, EndpointError) as exc:
                        event("abort", reason=str(exc))
                        log.aborted = True
                        log.labels = labels
                        return log
                    waypoints = [tuple(p) for p in path.world(grid)]
                    event("replanned", nodes=len(path), cost=path.cost, start=[cur[1], cur[0]])
        stepped = follow_path(state, waypoints, cfg.dt, cfg.speed, cfg.capture_radius)
        state = stepped.state
        waypoints = stepped.remaining
        if not log.outbound_waypoints:
            log.outbound_waypoints.append(grid.node_to_world(start))
        log.outbound_waypoints.extend(w for w in stepped.reached if w != log.outbound_waypoints[-1])
        tick()
        record()
        if stepped.arrived:
            break
        if t > cfg.max_time:
            event("abort", reason="mission time limit")
            log.aborted = True
            log.labels = labels
            return log

    # dwell
    event("dwell_start")
    dwell_ticks = round(cfg.dwell_s / cfg.dt)
    for _ in range(dwell_ticks):
        tick()
        record()
    event("dwell_end")

    # retrace
    log.return_waypoints = list(reversed(log.outbound_waypoints))
    waypoints = list(log.return_waypoints)
    while waypoints:
        pts = lidar_scan(scene, (*state.pos, state.heading), cfg.lidar_range, cfg.n_rays, t)
        log.dem.add(pts)
        stepped = follow_path(state, waypoints, cfg.dt, cfg.speed, cfg.capture_radius)
        state = stepped.state
        waypoints = stepped.remaining
        tick()
        record()
        if t > cfg.max_time:
            event("abort", reason="mission time limit")
            log.aborted = True
            break
    else:
        event("returned")
    log.labels = labels
    return log
