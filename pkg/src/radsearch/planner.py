"""Segmentation-weighted A* over an 8-connected pixel grid.

Moving from node ``xc`` to neighbour ``xn`` costs

    w1 * phi1(xc) + w2 * phi2(xn) + w3 * phi3(xc)  [+ base_step * |xn - xc|]

where ``phi1`` is the inverse distance to the nearest non-road pixel (zero off
road), ``phi2`` flags a non-road destination, and ``phi3`` is the inverse
distance to the nearest non-traversable pixel (zero off grass).  Nodes are
``(row, col)`` tuples throughout.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import dataclass, replace
import pathlib
from typing import Iterable

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ContractError, EndpointError, NoPathError, ParameterError
from .geo import Raster, pixel_to_world
from .segmentation import GRASS, ROAD, TRAVERSABLE

log = logging.getLogger(__name__)

NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
SQRT2 = math.sqrt(2.0)


def distance_transform(mask):
    """Exact Euclidean distance (pixels) from every cell to the nearest true cell.

    Accepts a boolean array or a mask raster and returns the same flavour.
    With no true cells every distance is infinite.
    """
    if isinstance(mask, Raster):
        return Raster(distance_transform(np.asarray(mask.data, bool)), mask.transform, None, "real")
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        return np.full(m.shape, np.inf)
    return ndimage.distance_transform_edt(~m)


@dataclass(frozen=True)
class CostWeights:
    w: tuple[float, float, float] = (5.0, 2.0, 5.0)
    base_step: float = 0.0
    slope: float = 0.0  # optional DEM term: |dz| / run, off by default

    def __post_init__(self):
        w = tuple(float(v) for v in self.w)
        if len(w) != 3 or min(w) < 0:
            raise ParameterError(f"weights must be three non-negative numbers, got {self.w}")
        if self.base_step < 0 or self.slope < 0:
            raise ParameterError("base_step and slope must be non-negative")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True, eq=False)
class PlanGrid:
    labels: Raster
    dem: Raster | None
    removed: np.ndarray
    d_nonroad: np.ndarray
    d_obstacle: np.ndarray

    @classmethod
    def from_labels(cls, labels: Raster, dem: Raster | None = None) -> "PlanGrid":
        removed = np.zeros(labels.shape, dtype=bool)
        valid = labels.valid_mask()
        d_nonroad = distance_transform(~(valid & (labels.data == ROAD)))
        grid = cls(labels, dem, removed, d_nonroad, np.zeros(0))
        return replace(grid, d_obstacle=distance_transform(~grid.traversable))

    @property
    def shape(self):
        return self.labels.shape

    @property
    def traversable(self) -> np.ndarray:
        lab = self.labels
        return lab.valid_mask() & np.isin(lab.data, TRAVERSABLE) & ~self.removed

    def is_traversable(self, node) -> bool:
        r, c = node
        h, w = self.shape
        return 0 <= r < h and 0 <= c < w and bool(self.traversable[r, c])

    def node_to_world(self, node):
        r, c = node
        return pixel_to_world(self.labels.transform, c, r)


def _phi_arrays(grid: PlanGrid):
    lab = grid.labels.data
    with np.errstate(divide="ignore"):
        phi1 = np.where(lab == ROAD, 1.0 / grid.d_nonroad, 0.0)
        phi3 = np.where(lab == GRASS, 1.0 / grid.d_obstacle, 0.0)
    phi2 = (lab != ROAD).astype(float)
    return phi1, phi2, phi3


def _check_step(grid: PlanGrid, xc, xn):
    if max(abs(xc[0] - xn[0]), abs(xc[1] - xn[1])) != 1:
        raise ContractError(f"{xc} and {xn} are not 8-adjacent")
    for x in (xc, xn):
        if not grid.is_traversable(x):
            raise ContractError(f"node {x} is not traversable")


def features(grid: PlanGrid, xc, xn) -> tuple[float, float, float]:
    _check_step(grid, xc, xn)
    lab = grid.labels.data
    phi1 = 1.0 / grid.d_nonroad[xc] if lab[xc] == ROAD else 0.0
    phi2 = 1.0 if lab[xn] != ROAD else 0.0
    phi3 = 1.0 / grid.d_obstacle[xc] if lab[xc] == GRASS else 0.0
    # on-class cells are at least one pixel from the other class
    assert phi1 <= 1.0 and phi3 <= 1.0
    return phi1, phi2, phi3


def _slope_term(grid: PlanGrid, xc, xn, run_px):
    if grid.dem is None:
        return 0.0
    dz = abs(float(grid.dem.data[xn]) - float(grid.dem.data[xc]))
    return dz / (run_px * grid.labels.transform.pixel_size)


def step_cost(grid: PlanGrid, weights: CostWeights, xc, xn) -> float:
    p1, p2, p3 = features(grid, xc, xn)
    w1, w2, w3 = weights.w
    run = SQRT2 if xc[0] != xn[0] and xc[1] != xn[1] else 1.0
    cost = w1 * p1 + w2 * p2 + w3 * p3 + weights.base_step * run
    if weights.slope:
        cost += weights.slope * _slope_term(grid, xc, xn, run)
    return cost


@dataclass
class Path:
    nodes: list[tuple[int, int]]
    cost: float
    expansions: int

    def __len__(self):
        return len(self.nodes)

    def world(self, grid: PlanGrid) -> np.ndarray:
        return np.array([grid.node_to_world(n) for n in self.nodes], dtype=float)

    def to_dict(self, grid: PlanGrid) -> dict:
        return {
            "pixels": [[int(c), int(r)] for r, c in self.nodes],
            "world": [[float(x), float(y)] for x, y in self.world(grid)],
            "cost": self.cost,
            "expansions": self.expansions,
        }


def astar(
    grid: PlanGrid,
    weights: CostWeights,
    start,
    goal,
    heuristic: str = "euclidean",
    heuristic_scale: float = 1.0,
) -> Path:
    """Lowest-cost path under the segmentation cost.

    ``heuristic='euclidean'`` uses straight-line pixel distance to the goal
    (times ``heuristic_scale``).  Because steps along a road centre cost less
    than one pixel of distance, that estimate can overshoot and the result is
    not guaranteed optimal; ``heuristic='zero'`` gives exact Dijkstra.
    Diagonal moves need both orthogonal neighbours traversable.
    """
    start = (int(start[0]), int(start[1]))
    goal = (int(goal[0]), int(goal[1]))
    for name, node in (("start", start), ("goal", goal)):
        if not grid.is_traversable(node):
            raise EndpointError(f"{name} {node} is not a traversable node")
    if heuristic not in ("euclidean", "zero"):
        raise ParameterError(f"unknown heuristic {heuristic!r}")
    h_w = heuristic_scale if heuristic == "euclidean" else 0.0

    H, W = grid.shape
    trav = grid.traversable.ravel().tolist()
    w1, w2, w3 = weights.w
    phi1, phi2, phi3 = _phi_arrays(grid)
    c1 = (w1 * phi1).ravel().tolist()
    c2 = (w2 * phi2).ravel().tolist()
    c3 = (w3 * phi3).ravel().tolist()
    base = weights.base_step
    slope_w = weights.slope if grid.dem is not None else 0.0
    dem = grid.dem.data.ravel().tolist() if slope_w else None
    ps = grid.labels.transform.pixel_size
    gr, gc = goal
    s_idx = start[0] * W + start[1]
    g_idx = gr * W + gc

    moves = []
    for dr, dc in NEIGHBOURS:
        run = SQRT2 if dr and dc else 1.0
        moves.append((dr, dc, dr * W + dc, run, base * run))

    g = {s_idx: 0.0}
    parent = {s_idx: -1}
    closed = bytearray(H * W)
    h0 = h_w * math.hypot(start[0] - gr, start[1] - gc)
    heap = [(h0, h0, s_idx)]
    expansions = 0
    while heap:
        f, h, u = heapq.heappop(heap)
        if closed[u]:
            continue
        closed[u] = 1
        expansions += 1
        if u == g_idx:
            nodes = []
            while u != -1:
                nodes.append(divmod(u, W))
                u = parent[u]
            nodes.reverse()
            return Path(nodes, g[g_idx], expansions)
        ur, uc = divmod(u, W)
        gu = g[u]
        a1 = c1[u]
        a3 = c3[u]
        for dr, dc, off, run, brun in moves:
            vr = ur + dr
            vc = uc + dc
            if vr < 0 or vr >= H or vc < 0 or vc >= W:
                continue
            v = u + off
            if closed[v] or not trav[v]:
                continue
            if dr and dc and not (trav[u + dr * W] and trav[u + dc]):
                continue
            cost = a1 + c2[v] + a3 + brun
            if slope_w:
                cost += slope_w * (abs(dem[v] - dem[u]) / (run * ps))
            ng = gu + cost
            old = g.get(v)
            if old is None or ng < old:
                g[v] = ng
                parent[v] = u
                hv = h_w * math.hypot(vr - gr, vc - gc) if h_w else 0.0
                heapq.heappush(heap, (ng + hv, hv, v))
    raise NoPathError(f"goal {goal} unreachable from {start}", explored=expansions)


def path_cost(grid: PlanGrid, weights: CostWeights, nodes) -> float:
    """Accumulated step cost along ``nodes``, summed from the start."""
    total = 0.0
    for a, b in zip(nodes, nodes[1:]):
        total += step_cost(grid, weights, tuple(a), tuple(b))
    return total


def chebyshev_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return mask.copy()
    k = 2 * int(radius) + 1
    return ndimage.maximum_filter(mask.astype(np.uint8), size=k, mode="constant", cval=0).astype(bool)


def remove_obstacle_nodes(grid: PlanGrid, cells: Iterable, dilation_radius: int = 0) -> PlanGrid:
    """New grid with ``cells`` (``(row, col)``) and their Chebyshev dilation excluded.

    Out-of-bounds cells are dropped with a logged count.
    """
    H, W = grid.shape
    mask = np.zeros((H, W), dtype=bool)
    clipped = 0
    n = 0
    for r, c in cells:
        n += 1
        r, c = int(r), int(c)
        if 0 <= r < H and 0 <= c < W:
            mask[r, c] = True
        else:
            clipped += 1
    if clipped:
        log.warning("remove_obstacle_nodes: clipped %d of %d out-of-bounds cells", clipped, n)
    if not mask.any():
        return grid
    removed = grid.removed | chebyshev_dilate(mask, dilation_radius)
    out = replace(grid, removed=removed)
    return replace(out, d_obstacle=distance_transform(~out.traversable))


# --------------------------------------------------------------------------
# plan request / path files
# --------------------------------------------------------------------------


@dataclass
class PlanRequest:
    labels_path: str
    start: tuple[float, float]
    goal: tuple[float, float]
    dem_path: str | None = None
    weights: tuple[float, float, float] = (5.0, 2.0, 5.0)
    base_step: float = 0.0
    heuristic: str = "euclidean"
    dilation_radius: int = 0
    obstacles_path: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "PlanRequest":
        try:
            return cls(
                labels_path=d["labels_path"],
                start=tuple(float(v) for v in d["start"]),
                goal=tuple(float(v) for v in d["goal"]),
                dem_path=d.get("dem_path"),
                weights=tuple(float(v) for v in d.get("weights", (5.0, 2.0, 5.0))),
                base_step=float(d.get("base_step", 0.0)),
                heuristic=d.get("heuristic", "euclidean"),
                dilation_radius=int(d.get("dilation_radius", 0)),
                obstacles_path=d.get("obstacles_path"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad plan request: {exc}") from exc


def write_path_json(path, grid: PlanGrid, p: Path):
    pathlib.Path(path).write_text(json.dumps(p.to_dict(grid), indent=2) + "\n")
