"""Disparity back-projection for a rectified stereo pair.

Disparity sign follows the reprojection matrix literally: a point at depth
``Z`` in front of the rig has ``d = (cx - cx_r) - f * B / Z``.  With equal
principal points that is ``d = x_right - x_left``, negative for points in
front of the cameras.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDisparityError, ParameterError
from .geo import DEFAULT_NODATA, Raster

W_EPS = 1e-12


@dataclass(frozen=True)
class StereoCalibration:
    f: float
    cx: float
    cy: float
    cx_r: float
    baseline_b: float = 1.38

    def __post_init__(self):
        if not self.f > 0:
            raise ParameterError(f"focal length must be positive, got {self.f}")
        if not self.baseline_b > 0:
            raise ParameterError(f"baseline must be positive, got {self.baseline_b}")


@dataclass
class PointCloud:
    points: np.ndarray
    colors: np.ndarray | None = None
    skipped_degenerate: int = 0

    def __len__(self):
        return len(self.points)


def build_q(calib: StereoCalibration) -> np.ndarray:
    f, cx, cy, cxr, b = calib.f, calib.cx, calib.cy, calib.cx_r, calib.baseline_b
    return np.array(
        [
            [1.0, 0.0, 0.0, -cx],
            [0.0, 1.0, 0.0, -cy],
            [0.0, 0.0, 0.0, f],
            [0.0, 0.0, -1.0 / b, (cx - cxr) / b],
        ]
    )


def back_project(q: np.ndarray, x, y, d, eps: float = W_EPS):
    """Camera-frame ``(X, Y, Z)`` in meters for pixel ``(x, y)`` with disparity ``d``."""
    h = q @ np.array([x, y, d, 1.0], dtype=float)
    w = h[3]
    if abs(w) < eps:
        raise DegenerateDisparityError(f"homogeneous scale {w!r} is below {eps} at d={d}")
    return h[0] / w, h[1] / w, h[2] / w


def project(calib: StereoCalibration, X, Y, Z):
    """Pinhole projection of a camera-frame point to ``(x, y, d)`` on the left image.

    Inverse of :func:`back_project` for the same calibration.
    """
    x = calib.f * X / Z + calib.cx
    y = calib.f * Y / Z + calib.cy
    d = (calib.cx - calib.cx_r) - calib.f * calib.baseline_b / Z
    return x, y, d


def _invalid(r: Raster) -> np.ndarray:
    return ~r.valid_mask()


def median_filter_depth(depth: Raster, window: int) -> Raster:
    """Windowed median over valid cells; invalid cells are ignored, not propagated.

    Invalid cells with at least one valid neighbour in the window are filled
    with that neighbourhood's median.
    """
    if int(window) != window or window < 1 or window % 2 == 0:
        raise ParameterError(f"median window must be an odd integer >= 1, got {window}")
    if window == 1:
        return depth
    z = np.array(depth.data, dtype=float)
    z[_invalid(depth)] = np.nan
    k = window // 2
    padded = np.pad(z, k, constant_values=np.nan)
    win = np.lib.stride_tricks.sliding_window_view(padded, (window, window))
    flat = win.reshape(z.shape + (window * window,))
    allnan = np.all(np.isnan(flat), axis=-1)
    with np.errstate(all="ignore"):
        med = np.nanmedian(np.where(allnan[..., None], 0.0, flat), axis=-1)
    nodata = DEFAULT_NODATA if depth.nodata is None else depth.nodata
    med[allnan] = nodata
    return Raster(med, depth.transform, nodata if allnan.any() else depth.nodata, depth.kind)


def disparity_to_cloud(
    disp: Raster,
    calib: StereoCalibration,
    median_window: int = 1,
    color: Raster | None = None,
    eps: float = W_EPS,
) -> PointCloud:
    """Back-project every valid disparity pixel; degenerate pixels are counted and skipped."""
    filtered = median_filter_depth(disp, median_window)
    valid = filtered.valid_mask()
    rows, cols = np.nonzero(valid)
    d = filtered.data[rows, cols].astype(float)
    q = build_q(calib)
    hom = np.stack([cols.astype(float), rows.astype(float), d, np.ones_like(d)])
    h = q @ hom
    w = h[3]
    ok = np.abs(w) >= eps
    pts = (h[:3, ok] / w[ok]).T
    colors = None
    if color is not None:
        colors = np.asarray(color.data)[rows[ok], cols[ok]]
    return PointCloud(pts, colors, int((~ok).sum()))


def write_cloud_csv(cloud: PointCloud, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        if cloud.colors is None:
            wr.writerow(["x", "y", "z"])
            for p in cloud.points:
                wr.writerow([repr(float(v)) for v in p])
        else:
            wr.writerow(["x", "y", "z", "r", "g", "b"])
            for p, c in zip(cloud.points, cloud.colors):
                wr.writerow([repr(float(v)) for v in p] + [int(v) for v in c])
