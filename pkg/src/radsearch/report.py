"""Self-contained SVG plots and PPM path overlays."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .geo import Raster
from .radiation import counts_histogram
from .scene import PALETTE

W, H = 640, 400
MARGIN = 50

PATH_RGB = (255, 0, 0)
OBSTACLE_RGB = (0, 0, 255)
START_RGB = (0, 255, 0)
GOAL_RGB = (255, 255, 0)


def _n(v: float) -> str:
    return f"{v:.2f}"


def _frame(title: str, body: list[str], xlabel: str, ylabel: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W // 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{H - MARGIN}" x2="{W - MARGIN}" y2="{H - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{H - MARGIN}" stroke="black"/>',
        f'<text x="{W // 2}" y="{H - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>',
        f'<text x="15" y="{H // 2}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 15 {H // 2})">{escape(ylabel)}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _scale(v, lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return a + (np.asarray(v, dtype=float) - lo) / span * (b - a)


def histogram_svg(counts: Sequence[int], bin_width: float, title: str = "counts histogram") -> str:
    """Unnormalized counts histogram; each bar carries its tally in ``data-count``."""
    bins = counts_histogram(counts, bin_width)
    body = []
    if bins:
        top = max(b.count for b in bins)
        lo, hi = bins[0].lo, bins[-1].hi
        for b in bins:
            x0 = float(_scale(b.lo, lo, hi, MARGIN, W - MARGIN))
            x1 = float(_scale(b.hi, lo, hi, MARGIN, W - MARGIN))
            y = float(_scale(b.count, 0, top, H - MARGIN, MARGIN))
            body.append(
                f'<rect class="bin" x="{_n(x0)}" y="{_n(y)}" width="{_n(x1 - x0)}" height="{_n(H - MARGIN - y)}" '
                f'fill="steelblue" stroke="white" data-lo="{b.lo!r}" data-hi="{b.hi!r}" data-count="{b.count}"/>'
            )
        arr = np.asarray(counts, dtype=float)
        body.append(
            f'<text x="{W - MARGIN}" y="40" text-anchor="end" font-family="sans-serif" font-size="12">'
            f"mean {arr.mean():.1f}, sd {arr.std(ddof=1) if arr.size > 1 else 0.0:.1f}, N {arr.size}</text>"
        )
        body.append(f'<text x="{MARGIN}" y="{H - MARGIN + 15}" font-family="sans-serif" font-size="10">{lo:g}</text>')
        body.append(
            f'<text x="{W - MARGIN}" y="{H - MARGIN + 15}" text-anchor="end" font-family="sans-serif" font-size="10">{hi:g}</text>'
        )
    return _frame(title, body, "counts", "measurements")


def _polyline(xs, ys, colour, cls):
    pts = " ".join(f"{_n(x)},{_n(y)}" for x, y in zip(xs, ys))
    return f'<polyline class="{cls}" points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>'


def counts_time_svg(t, counts, distance_t=None, distance=None, title: str = "counts over time") -> str:
    """Counts against time, with distance to goal on a second axis when given."""
    t = np.asarray(t, dtype=float)
    c = np.asarray(counts, dtype=float)
    body = []
    if t.size:
        t_lo, t_hi = float(t.min()), float(t.max())
        if distance_t is not None and len(distance_t):
            t_lo = min(t_lo, float(np.min(distance_t)))
            t_hi = max(t_hi, float(np.max(distance_t)))
        xs = _scale(t, t_lo, t_hi, MARGIN, W - MARGIN)
        ys = _scale(c, float(c.min()), float(c.max()), H - MARGIN, MARGIN)
        body.append(_polyline(xs, ys, "black", "counts"))
        body.append(f'<text x="{MARGIN + 5}" y="{MARGIN - 5}" font-family="sans-serif" font-size="10">counts {c.min():g} to {c.max():g}</text>')
        if distance is not None and len(distance):
            dt = np.asarray(distance_t, dtype=float)
            d = np.asarray(distance, dtype=float)
            dx = _scale(dt, t_lo, t_hi, MARGIN, W - MARGIN)
            dy = _scale(d, 0.0, float(d.max()), H - MARGIN, MARGIN)
            body.append(_polyline(dx, dy, "red", "distance"))
            body.append(
                f'<text x="{W - MARGIN}" y="{MARGIN - 5}" text-anchor="end" fill="red" font-family="sans-serif" '
                f'font-size="10">distance to goal 0 to {d.max():.1f} m</text>'
            )
    return _frame(title, body, "time (s)", "counts")


def label_image(labels: Raster) -> np.ndarray:
    rgb = np.zeros(labels.shape + (3,), dtype=np.uint8)
    for code, col in PALETTE.items():
        rgb[labels.data == code] = col
    return rgb


def path_overlay(base: Raster, path_nodes=(), obstacles=None, start=None, goal=None, marker: int = 3) -> Raster:
    """Draw a path (red), obstacle cells (blue) and start/goal squares on an RGB or label raster.

    ``obstacles`` is a boolean mask or a list of ``(row, col)``; nodes are ``(row, col)``.
    """
    rgb = np.array(base.data, dtype=np.uint8) if base.kind == "rgb" else label_image(base)
    h, w = rgb.shape[:2]
    if obstacles is not None:
        ob = np.asarray(obstacles)
        if ob.dtype == bool:
            rgb[ob] = OBSTACLE_RGB
        elif ob.size:
            ob = ob.reshape(-1, 2)
            rgb[ob[:, 0], ob[:, 1]] = OBSTACLE_RGB
    for r, c in path_nodes:
        rgb[r, c] = PATH_RGB
    for node, col in ((start, START_RGB), (goal, GOAL_RGB)):
        if node is None:
            continue
        r, c = node
        rgb[max(0, r - marker) : min(h, r + marker + 1), max(0, c - marker) : min(w, c + marker + 1)] = col
    return Raster(rgb, base.transform, None, "rgb")
