"""Synthetic farm-campus test scenes: road loop, lawns, buildings, parked vehicles,
tree clumps and cast shadows, with a matching DEM and orthophoto."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geo import GeoTransform, Raster
from .segmentation import BUILDING, GRASS, LABEL_NODATA, ROAD, SHADOW, VEGETATION, VEHICLE

PALETTE = {
    ROAD: (96, 96, 100),
    GRASS: (74, 128, 52),
    VEHICLE: (214, 130, 30),
    BUILDING: (150, 140, 128),
    VEGETATION: (28, 82, 30),
    SHADOW: (30, 34, 30),
}

HEIGHTS = {BUILDING: (4.0, 7.0), VEHICLE: (1.4, 1.9), VEGETATION: (3.0, 8.0)}


@dataclass
class SceneConfig:
    width: int = 458
    height: int = 440
    pixel_size: float = 0.6
    origin: tuple[float, float] = (0.0, 0.0)
    road_width: int = 10
    n_buildings: int = 6
    n_vehicles: int = 8
    n_trees: int = 14
    shadow_width: int = 5
    terrain_relief: float = 0.8
    seed: int = 0


@dataclass
class Scene:
    labels: Raster
    dem: Raster
    ortho: Raster
    start: tuple[int, int]  # (row, col) on the entry road at the map edge
    ground: np.ndarray  # terrain without structures
    objects: list = field(default_factory=list)

    @property
    def transform(self) -> GeoTransform:
        return self.labels.transform

    def metadata(self) -> dict:
        x, y = self.transform.origin_x, self.transform.origin_y
        ps = self.transform.pixel_size
        return {
            "width": self.labels.width,
            "height": self.labels.height,
            "transform": self.transform.to_dict(),
            "start_pixel": [self.start[1], self.start[0]],
            "start_world": [x + self.start[1] * ps, y + self.start[0] * ps],
            "objects": self.objects,
            "category_counts": {
                str(c): int(np.sum(self.labels.data == c)) for c in range(6)
            },
        }


def _free(mask_taken, r0, c0, r1, c1, margin):
    H, W = mask_taken.shape
    if r0 - margin < 0 or c0 - margin < 0 or r1 + margin > H or c1 + margin > W:
        return False
    return not mask_taken[r0 - margin : r1 + margin, c0 - margin : c1 + margin].any()


def generate_scene(cfg: SceneConfig | None = None) -> Scene:
    cfg = cfg or SceneConfig()
    rng = np.random.default_rng(cfg.seed)
    H, W = cfg.height, cfg.width
    ps = cfg.pixel_size
    lab = np.full((H, W), GRASS, dtype=np.int64)
    rw = cfg.road_width

    # road ring plus an entry spur to the west edge
    r0, r1 = int(H * 0.2), int(H * 0.8)
    c0, c1 = int(W * 0.22), int(W * 0.8)
    lab[r0 : r0 + rw, c0:c1] = ROAD
    lab[r1 - rw : r1, c0:c1] = ROAD
    lab[r0:r1, c0 : c0 + rw] = ROAD
    lab[r0:r1, c1 - rw : c1] = ROAD
    spur_r = (r0 + r1) // 2 - rw // 2
    lab[spur_r : spur_r + rw, 0 : c0 + 1] = ROAD
    # second spur south from the ring's bottom side
    spur_c = (c0 + c1) // 2
    lab[0:r0 + 1, spur_c : spur_c + rw] = ROAD
    start = (spur_r + rw // 2, 0)

    ground_noise = ndimage.gaussian_filter(rng.standard_normal((H, W)), sigma=40)
    ground_noise *= cfg.terrain_relief / max(1e-9, np.abs(ground_noise).max())
    yy, xx = np.mgrid[0:H, 0:W]
    ground = 0.01 * ps * xx + 0.006 * ps * yy + ground_noise
    ground = ground - ground.min() + 600.0
    dem = ground.copy()

    taken = lab == ROAD
    objects = []

    def place_rect(kind, hmin, hmax, wmin, wmax, margin, tries=400):
        for _ in range(tries):
            h = int(rng.integers(hmin, hmax + 1))
            w = int(rng.integers(wmin, wmax + 1))
            rr = int(rng.integers(0, H - h))
            cc = int(rng.integers(0, W - w))
            if _free(taken, rr, cc, rr + h, cc + w, margin):
                return rr, cc, rr + h, cc + w
        return None

    for _ in range(cfg.n_buildings):
        box = place_rect(BUILDING, 18, 34, 22, 44, margin=cfg.shadow_width + 4)
        if box is None:
            continue
        a, b, c, d = box
        height = float(rng.uniform(*HEIGHTS[BUILDING]))
        lab[a:c, b:d] = BUILDING
        dem[a:c, b:d] = ground[a:c, b:d].max() + height
        # shadow cast to the east of the building
        sw = cfg.shadow_width
        lab[a:c, d : d + sw] = SHADOW
        taken[a - 2 : c + 2, b - 2 : d + sw + 2] = True
        objects.append({"kind": "building", "rows": [a, c], "cols": [b, d], "height": height})

    road = lab == ROAD
    d_road = ndimage.distance_transform_edt(~road)
    placed = 0
    for _ in range(60 * cfg.n_vehicles):
        if placed == cfg.n_vehicles:
            break
        cand = np.argwhere((d_road >= 3) & (d_road <= 6) & (lab == GRASS))
        r, c = cand[rng.integers(len(cand))]
        vh, vw = (4, 8) if rng.random() < 0.5 else (8, 4)
        a, b = int(r) - vh // 2, int(c) - vw // 2
        if a < 1 or b < 1 or a + vh >= H or b + vw >= W:
            continue
        c2, d2 = a + vh, b + vw
        if (taken & ~road)[a - 2 : c2 + 2, b - 2 : d2 + 2].any():
            continue
        if (lab[a - 1 : c2 + 1, b - 1 : d2 + 1] != GRASS).any():
            continue
        height = float(rng.uniform(*HEIGHTS[VEHICLE]))
        lab[a:c2, b:d2] = VEHICLE
        dem[a:c2, b:d2] = ground[a:c2, b:d2] + height
        taken[a - 2 : c2 + 2, b - 2 : d2 + 2] = True
        objects.append({"kind": "vehicle", "rows": [a, c2], "cols": [b, d2], "height": height})
        placed += 1

    for _ in range(cfg.n_trees):
        rad = int(rng.integers(5, 11))
        box = place_rect(VEGETATION, 2 * rad, 2 * rad, 2 * rad, 2 * rad, margin=4)
        if box is None:
            continue
        a, b, c, d = box
        cy, cx = (a + c - 1) / 2, (b + d - 1) / 2
        disc = (yy[a:c, b:d] - cy) ** 2 + (xx[a:c, b:d] - cx) ** 2 <= rad**2
        height = float(rng.uniform(*HEIGHTS[VEGETATION]))
        dome = height * np.sqrt(np.clip(1 - ((yy[a:c, b:d] - cy) ** 2 + (xx[a:c, b:d] - cx) ** 2) / rad**2, 0, 1))
        lab[a:c, b:d][disc] = VEGETATION
        dem[a:c, b:d][disc] = ground[a:c, b:d][disc] + np.maximum(dome[disc], 1.0)
        taken[a - 2 : c + 2, b - 2 : d + 2] = True
        objects.append({"kind": "vegetation", "center": [int(round(cy)), int(round(cx))], "radius": rad, "height": height})

    rgb = np.zeros((H, W, 3))
    for code, col in PALETTE.items():
        rgb[lab == code] = col
    rgb += rng.normal(0, 6.0, size=rgb.shape)
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)

    gt = GeoTransform(cfg.origin[0], cfg.origin[1], ps)
    return Scene(
        labels=Raster(lab, gt, LABEL_NODATA, "label"),
        dem=Raster(dem, gt, None, "elevation"),
        ortho=Raster(rgb, gt, None, "rgb"),
        start=start,
        ground=ground,
        objects=objects,
    )


def random_free_cell(scene: Scene, rng, code=GRASS, min_clearance=6):
    """A cell of class ``code`` at least ``min_clearance`` pixels from other classes."""
    other = scene.labels.data != code
    dist = ndimage.distance_transform_edt(~other)
    cand = np.argwhere(dist >= min_clearance)
    r, c = cand[rng.integers(len(cand))]
    return int(r), int(c)
