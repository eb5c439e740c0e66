"""Label taxonomy, synthetic unaries, DEM-driven obstacle regions, refinement and metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionError, ParameterError
from .geo import GeoTransform, Raster, gradient_magnitude, read_ascii_grid, require_same_grid, write_ascii_grid

ROAD, GRASS, VEHICLE, BUILDING, VEGETATION, SHADOW = range(6)
CATEGORY_NAMES = ("road", "grass", "vehicle", "building", "vegetation", "shadow")
N_CATEGORIES = len(CATEGORY_NAMES)
TRAVERSABLE = (ROAD, GRASS)
NON_TRAVERSABLE = (VEHICLE, BUILDING, VEGETATION, SHADOW)
LABEL_NODATA = -1

# building roofs read as pavement, lawn or parked cars in the 2D-only model
DEFAULT_CONFUSERS: dict[int, tuple[int, ...]] = {BUILDING: (ROAD, GRASS, VEHICLE, SHADOW)}

_4CONN = ndimage.generate_binary_structure(2, 1)
_8CONN = ndimage.generate_binary_structure(2, 2)


def label_raster(codes, transform=None, nodata=LABEL_NODATA) -> Raster:
    r = Raster(codes, transform or GeoTransform(), nodata, "label")
    check_labels(r)
    return r


def check_labels(r: Raster):
    v = r.data[r.valid_mask()]
    if v.size and (v.min() < 0 or v.max() >= N_CATEGORIES):
        raise ParameterError(f"label codes must lie in 0..{N_CATEGORIES - 1}")


def traversable_mask(labels: Raster) -> np.ndarray:
    return labels.valid_mask() & np.isin(labels.data, TRAVERSABLE)


def synth_unaries(
    truth: Raster,
    noise_level: float,
    rng: np.random.Generator,
    confuser_map: Mapping[int, Sequence[int]] | None = None,
) -> Raster:
    """Per-pixel class scores standing in for a trained classifier.

    Each pixel keeps ``1 - noise_level`` on its true class; the rest is split
    over that class's confusers with Dirichlet(1) weights.  Classes missing
    from ``confuser_map`` spread their noise over all categories (themselves
    included), so ``noise_level=1`` gives chance-level argmax accuracy.
    """
    if not 0.0 <= noise_level <= 1.0:
        raise ParameterError(f"noise_level must lie in [0, 1], got {noise_level}")
    check_labels(truth)
    cmap = dict(DEFAULT_CONFUSERS if confuser_map is None else confuser_map)
    lab = truth.data
    valid = truth.valid_mask()
    h, w = truth.shape
    scores = np.zeros((h, w, N_CATEGORIES))
    # one Dirichlet draw per pixel over all categories, renormalised per confuser set
    g = rng.standard_exponential((h, w, N_CATEGORIES))
    for c in range(N_CATEGORIES):
        sel = valid & (lab == c)
        if not sel.any():
            continue
        conf = np.zeros(N_CATEGORIES, dtype=bool)
        conf[list(cmap.get(c, range(N_CATEGORIES)))] = True
        gw = g[sel] * conf
        gw /= gw.sum(axis=1, keepdims=True)
        s = noise_level * gw
        s[:, c] += 1.0 - noise_level
        scores[sel] = s
    scores[~valid] = np.nan
    return Raster(scores, truth.transform, np.nan, "score")


def argmax_labels(unaries: Raster) -> Raster:
    """Most likely category per pixel; ties go to the lowest code."""
    valid = unaries.valid_mask()
    s = np.where(valid[..., None], unaries.data, 0.0)
    out = np.argmax(s, axis=2)
    out[~valid] = LABEL_NODATA
    return Raster(out, unaries.transform, LABEL_NODATA, "label")


@dataclass
class ObstacleRegions:
    ids: np.ndarray  # 0 = none, regions numbered densely from 1
    cell_counts: list[int] = field(default_factory=list)
    bboxes: list[tuple[int, int, int, int]] = field(default_factory=list)  # row0, col0, row1, col1 (exclusive)
    tau: float = 0.0

    @property
    def n_regions(self) -> int:
        return len(self.cell_counts)


def auto_tau(grad: np.ndarray) -> float:
    return float(grad.mean() + 2.0 * grad.std())


def detect_obstacle_regions(
    dem: Raster, tau: float | str = "auto", n_close: int = 2, min_height: float | None = 0.5
) -> ObstacleRegions:
    """Enclosed high-gradient regions of a DEM.

    Cells steeper than ``tau`` form a mask that is closed with a 3x3 element
    ``n_close`` times.  Low cells connected to the raster border are
    background; the remaining cells split into 4-connected components, and
    components touching the border are discarded.

    A central difference marks both sides of a step, so each enclosure also
    holds a rim of ground.  With ``min_height`` set, only cells standing more
    than ``min_height`` above the median of the ring just outside their
    enclosure are kept, and the survivors are split into components again.
    """
    if dem.height < 3 or dem.width < 3:
        raise DimensionError(f"obstacle detection needs at least 3x3 cells, got {dem.shape}")
    grad_r = gradient_magnitude(dem)
    valid = grad_r.valid_mask()
    grad = np.where(valid, grad_r.data, 0.0)
    t = auto_tau(grad[valid]) if tau == "auto" else float(tau)
    steep = (grad > t) & valid
    if n_close > 0 and steep.any():
        # pad so closing does not erode against the raster edge
        pad = n_close + 1
        closed = ndimage.binary_closing(np.pad(steep, pad), structure=_8CONN, iterations=n_close)
        steep = closed[pad:-pad, pad:-pad] | steep
    low = ~steep
    comp, _ = ndimage.label(low, structure=_4CONN)
    edge_ids = np.unique(np.concatenate([comp[0], comp[-1], comp[:, 0], comp[:, -1]]))
    background = np.isin(comp, edge_ids[edge_ids > 0])
    candidates = ~background
    if min_height is not None:
        candidates = _raised(dem, candidates, float(min_height))
    regions, n = ndimage.label(candidates, structure=_4CONN)
    ids = np.zeros_like(regions)
    counts, boxes = [], []
    next_id = 1
    for rid, sl in enumerate(ndimage.find_objects(regions), start=1):
        if sl is None:
            continue
        r0, r1 = sl[0].start, sl[0].stop
        c0, c1 = sl[1].start, sl[1].stop
        if r0 == 0 or c0 == 0 or r1 == dem.height or c1 == dem.width:
            continue
        m = regions[sl] == rid
        ids[sl][m] = next_id
        counts.append(int(m.sum()))
        boxes.append((r0, c0, r1, c1))
        next_id += 1
    return ObstacleRegions(ids, counts, boxes, t)


def _raised(dem: Raster, candidates: np.ndarray, min_height: float) -> np.ndarray:
    """Cells of each enclosure higher than ``min_height`` above its surrounding ground."""
    z = dem.data.astype(float)
    valid = dem.valid_mask()
    keep = np.zeros_like(candidates)
    comp, _ = ndimage.label(candidates, structure=_4CONN)
    for rid, sl in enumerate(ndimage.find_objects(comp), start=1):
        if sl is None:
            continue
        # one cell of margin so the ring fits in the window
        win = tuple(slice(max(s.start - 1, 0), s.stop + 1) for s in sl)
        m = comp[win] == rid
        ring = ndimage.binary_dilation(m, structure=_8CONN) & ~m & valid[win]
        if not ring.any():
            continue
        ground = float(np.median(z[win][ring]))
        keep[win] |= m & valid[win] & (z[win] - ground > min_height)
    return keep


def refine_with_dem(labels: Raster, unaries: Raster, regions: ObstacleRegions) -> Raster:
    """Relabel traversable pixels inside each region with the region's dominant obstacle class.

    Per pixel the most likely category among the non-traversable ones is
    taken; its mode over the region (ties to the lowest code) replaces every
    road or grass label inside the region.  Nothing outside a region changes.
    """
    require_same_grid(labels, unaries, "labels and unaries")
    if regions.ids.shape != labels.shape:
        raise DimensionError(f"regions {regions.ids.shape} do not match labels {labels.shape}")
    out = np.array(labels.data)
    nt = np.array(NON_TRAVERSABLE)
    scores = np.nan_to_num(unaries.data[..., nt], nan=-np.inf)
    best_nt = nt[np.argmax(scores, axis=2)]
    uvalid = unaries.valid_mask()
    trav = traversable_mask(labels)
    for rid, sl in enumerate(ndimage.find_objects(regions.ids), start=1):
        if sl is None:
            continue
        inside = regions.ids[sl] == rid
        votes = best_nt[sl][inside & uvalid[sl]]
        if votes.size == 0:
            continue
        mode = int(np.argmax(np.bincount(votes, minlength=N_CATEGORIES)))
        out[sl][inside & trav[sl]] = mode
    return Raster(out, labels.transform, labels.nodata, "label")


@dataclass
class SegmentationMetrics:
    precision: np.ndarray
    recall: np.ndarray
    global_accuracy: float
    average_recall: float
    average_precision: float
    confusion: np.ndarray  # rows truth, columns prediction

    def to_dict(self) -> dict:
        def clean(a):
            return [None if np.isnan(v) else float(v) for v in a]

        return {
            "categories": list(CATEGORY_NAMES),
            "precision": clean(self.precision),
            "recall": clean(self.recall),
            "global": self.global_accuracy,
            "average": self.average_recall,
            "average_definition": "mean of per-category recall over categories present in truth",
            "average_precision": self.average_precision,
            "confusion": self.confusion.astype(int).ravel().tolist(),
            "confusion_shape": list(self.confusion.shape),
        }


def confusion_matrix(pred: Raster, truth: Raster) -> np.ndarray:
    require_same_grid(pred, truth, "prediction and truth")
    ok = pred.valid_mask() & truth.valid_mask()
    t = truth.data[ok].astype(np.int64)
    p = pred.data[ok].astype(np.int64)
    return np.bincount(t * N_CATEGORIES + p, minlength=N_CATEGORIES**2).reshape(N_CATEGORIES, N_CATEGORIES)


def precision_recall(pred: Raster, truth: Raster) -> SegmentationMetrics:
    """Per-category precision TP/(TP+FP) and recall TP/(TP+FN); nodata pixels are skipped.

    Undefined ratios (no predictions, or no truth pixels, of a category) are NaN.
    """
    cm = confusion_matrix(pred, truth)
    tp = np.diag(cm).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = tp / cm.sum(axis=0)
        recall = tp / cm.sum(axis=1)
    total = cm.sum()
    glob = float(tp.sum() / total) if total else float("nan")
    avg_r = float(np.nanmean(recall)) if np.any(~np.isnan(recall)) else float("nan")
    avg_p = float(np.nanmean(precision)) if np.any(~np.isnan(precision)) else float("nan")
    return SegmentationMetrics(precision, recall, glob, avg_r, avg_p, cm)


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------


def legend() -> dict:
    return {
        str(code): {"name": name, "traversable": code in TRAVERSABLE}
        for code, name in enumerate(CATEGORY_NAMES)
    }


def write_legend_json(path):
    Path(path).write_text(json.dumps(legend(), indent=2) + "\n")


def write_unaries(unaries: Raster, directory, prefix="unary_c"):
    directory = Path(directory)
    for c in range(unaries.data.shape[2]):
        layer = np.where(unaries.valid_mask(), unaries.data[..., c], -9999.0)
        write_ascii_grid(Raster(layer, unaries.transform, -9999.0, "real"), directory / f"{prefix}{c}.asc")


def read_unaries(directory, prefix="unary_c", n=N_CATEGORIES) -> Raster:
    directory = Path(directory)
    layers = [read_ascii_grid(directory / f"{prefix}{c}.asc", kind="real") for c in range(n)]
    for layer in layers[1:]:
        require_same_grid(layers[0], layer, "unary layers")
    stack = np.stack([np.where(l.valid_mask(), l.data, np.nan) for l in layers], axis=2)
    return Raster(stack, layers[0].transform, np.nan, "score")

