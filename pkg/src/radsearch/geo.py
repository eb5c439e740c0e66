"""Georeferenced rasters, coordinate transforms and raster file I/O.

Pixel ``(col, row)`` has its center at world
``(origin_x + col * pixel_size, origin_y + row * pixel_size)``, so in memory
row index grows with northing.  Files are written north-up: the first row of
an ``.asc`` or ``.ppm`` file is the northernmost raster row, and readers flip
back.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, ParameterError, RasterKindError

DEFAULT_NODATA = -9999.0

KINDS = ("elevation", "real", "rgb", "label", "score", "mask")


@dataclass(frozen=True)
class GeoTransform:
    origin_x: float = 0.0
    origin_y: float = 0.0
    pixel_size: float = 1.0

    def __post_init__(self):
        if not (self.pixel_size > 0 and math.isfinite(self.pixel_size)):
            raise ParameterError(f"pixel_size must be positive, got {self.pixel_size}")

    def scaled(self, factor: int) -> "GeoTransform":
        """Transform of a raster whose pixels each cover ``factor`` x ``factor`` of ours."""
        shift = (factor - 1) / 2.0 * self.pixel_size
        return GeoTransform(self.origin_x + shift, self.origin_y + shift, self.pixel_size * factor)

    def to_dict(self) -> dict:
        return {"origin_x": self.origin_x, "origin_y": self.origin_y, "pixel_size": self.pixel_size}


def world_to_pixel(gt: GeoTransform, x, y):
    """Real-valued ``(col, row)`` of world point ``(x, y)``."""
    return (x - gt.origin_x) / gt.pixel_size, (y - gt.origin_y) / gt.pixel_size


def pixel_to_world(gt: GeoTransform, col, row):
    return gt.origin_x + col * gt.pixel_size, gt.origin_y + row * gt.pixel_size


def world_to_cell(gt: GeoTransform, x, y):
    """Integer ``(col, row)`` of the pixel containing ``(x, y)``."""
    c, r = world_to_pixel(gt, np.asarray(x, float), np.asarray(y, float))
    c = np.floor(c + 0.5).astype(int)
    r = np.floor(r + 0.5).astype(int)
    if c.ndim == 0:
        return int(c), int(r)
    return c, r


@dataclass(frozen=True, eq=False)
class Raster:
    """Immutable 2D grid with a geotransform.

    ``data`` has shape ``(height, width)`` for scalar kinds, ``(height, width, 3)``
    for ``rgb`` and ``(height, width, n)`` for ``score`` rasters.
    """

    data: np.ndarray
    transform: GeoTransform = field(default_factory=GeoTransform)
    nodata: float | None = None
    kind: str = "elevation"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RasterKindError(f"unknown raster kind {self.kind!r}")
        arr = np.array(self.data, copy=True)
        if self.kind == "rgb":
            arr = arr.astype(np.uint8)
            if arr.ndim != 3 or arr.shape[2] != 3:
                raise DimensionError(f"rgb raster needs shape (h, w, 3), got {arr.shape}")
        elif self.kind == "score":
            arr = arr.astype(float)
            if arr.ndim != 3:
                raise DimensionError(f"score raster needs shape (h, w, n), got {arr.shape}")
        elif self.kind in ("label", "mask"):
            if arr.ndim != 2:
                raise DimensionError(f"{self.kind} raster must be 2D, got {arr.shape}")
            arr = arr.astype(bool) if self.kind == "mask" else arr.astype(np.int64)
        else:
            arr = arr.astype(float)
            if arr.ndim != 2:
                raise DimensionError(f"{self.kind} raster must be 2D, got {arr.shape}")
            bad = ~np.isfinite(arr)
            if self.nodata is not None:
                bad &= ~np.isnan(arr) if math.isnan(self.nodata) else arr != self.nodata
            if bad.any():
                raise ParameterError("non-finite values in raster that are not nodata")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def valid_mask(self) -> np.ndarray:
        """True where the cell holds data (all channels, for vector kinds)."""
        if self.nodata is None:
            return np.ones(self.shape, dtype=bool)
        d = self.data
        if math.isnan(self.nodata):
            bad = np.isnan(d)
        else:
            bad = d == self.nodata
        if d.ndim == 3:
            bad = bad.all(axis=2)
        return ~bad

    def with_data(self, data, kind=None, nodata="same") -> "Raster":
        return Raster(
            data,
            self.transform,
            self.nodata if nodata == "same" else nodata,
            kind or self.kind,
        )

    def cell_centers(self):
        """World ``(X, Y)`` meshgrids of pixel centers, shape ``(height, width)``."""
        cols = np.arange(self.width)
        rows = np.arange(self.height)
        x, y = pixel_to_world(self.transform, cols[None, :], rows[:, None])
        return np.broadcast_to(x, self.shape), np.broadcast_to(y, self.shape)

    def contains(self, col, row) -> bool:
        return 0 <= col < self.width and 0 <= row < self.height


def same_grid(a: Raster, b: Raster) -> bool:
    return a.shape == b.shape and a.transform == b.transform


def require_same_grid(a: Raster, b: Raster, what="rasters"):
    if a.shape != b.shape:
        raise DimensionError(f"{what} differ in size: {a.shape} vs {b.shape}")
    if a.transform != b.transform:
        raise DimensionError(f"{what} are not co-registered: {a.transform} vs {b.transform}")


def _as_nan(r: Raster) -> np.ndarray:
    z = np.array(r.data, dtype=float)
    z[~r.valid_mask()] = np.nan
    return z


def gradient_magnitude(dem: Raster) -> Raster:
    """Slope magnitude (rise over run) of an elevation raster.

    Central differences in the interior, one-sided at the borders.  A cell
    whose own value or any stencil neighbour is nodata comes out as nodata.
    """
    if dem.height < 2 or dem.width < 2:
        raise DimensionError(f"gradient needs at least 2x2 cells, got {dem.shape}")
    z = _as_nan(dem)
    ps = dem.transform.pixel_size
    gy, gx = np.gradient(z, ps, ps)
    mag = np.hypot(gx, gy)
    mag[np.isnan(z)] = np.nan
    nodata = DEFAULT_NODATA if dem.nodata is None else dem.nodata
    bad = np.isnan(mag)
    if bad.any():
        if not math.isnan(nodata):
            mag[bad] = nodata
        return Raster(mag, dem.transform, nodata, "real")
    return Raster(mag, dem.transform, dem.nodata, "real")


def _blocks(arr, factor, fill):
    h, w = arr.shape[:2]
    H, W = -(-h // factor), -(-w // factor)
    pad = [(0, H * factor - h), (0, W * factor - w)] + [(0, 0)] * (arr.ndim - 2)
    p = np.pad(arr, pad, constant_values=fill)
    shape = (H, factor, W, factor) + arr.shape[2:]
    b = p.reshape(shape)
    # -> (H, W, factor*factor, ...)
    b = np.moveaxis(b, 2, 1).reshape((H, W, factor * factor) + arr.shape[2:])
    return b


def downsample(r: Raster, factor: int, reducer: str) -> Raster:
    """Reduce ``factor`` x ``factor`` blocks to one pixel.

    ``mean`` ignores nodata (all-nodata blocks stay nodata), ``mode`` picks the
    most frequent valid code with ties going to the lowest code, ``nearest``
    takes the block's center pixel.  Edge blocks may be partial.
    """
    if int(factor) != factor or factor < 1:
        raise ParameterError(f"factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return r
    gt = r.transform.scaled(factor)
    if reducer == "mean":
        if r.kind in ("label", "mask"):
            raise RasterKindError(f"mean reducer is undefined for {r.kind} rasters")
        z = _as_nan(r) if r.kind in ("elevation", "real", "score") else r.data.astype(float)
        b = _blocks(z, factor, np.nan)
        with np.errstate(invalid="ignore"):
            cnt = np.sum(~np.isnan(b), axis=2)
            out = np.nansum(b, axis=2) / np.where(cnt == 0, 1, cnt)
        empty = cnt == 0
        if r.kind == "rgb":
            return Raster(np.clip(np.rint(out), 0, 255), gt, r.nodata, "rgb")
        if empty.any():
            nodata = DEFAULT_NODATA if r.nodata is None else r.nodata
            out[empty] = nodata
            return Raster(out, gt, nodata, r.kind)
        return Raster(out, gt, r.nodata, r.kind)
    if reducer == "mode":
        if r.kind not in ("label", "mask"):
            raise RasterKindError(f"mode reducer needs a label raster, got {r.kind}")
        lab = r.data.astype(np.int64)
        valid = r.valid_mask()
        codes = np.unique(lab[valid])
        b = _blocks(lab, factor, 0)
        vb = _blocks(valid, factor, False)
        if codes.size == 0:
            out = np.full(b.shape[:2], r.nodata if r.nodata is not None else 0)
            return Raster(out, gt, r.nodata, r.kind)
        counts = np.stack([np.sum((b == c) & vb, axis=2) for c in codes], axis=-1)
        out = codes[np.argmax(counts, axis=-1)]
        empty = counts.sum(axis=-1) == 0
        if empty.any():
            out = out.copy()
            out[empty] = r.nodata
        return Raster(out, gt, r.nodata, r.kind)
    if reducer == "nearest":
        rows = np.minimum(np.arange(0, r.height, factor) + factor // 2, r.height - 1)
        cols = np.minimum(np.arange(0, r.width, factor) + factor // 2, r.width - 1)
        return Raster(r.data[np.ix_(rows, cols)], gt, r.nodata, r.kind)
    raise ParameterError(f"unknown reducer {reducer!r}")


# --------------------------------------------------------------------------
# File I/O
# --------------------------------------------------------------------------


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".geo.json")


def write_sidecar(gt: GeoTransform, path):
    sidecar_path(path).write_text(json.dumps(gt.to_dict(), indent=2) + "\n")


def read_sidecar(path) -> GeoTransform | None:
    sp = sidecar_path(path)
    if not sp.exists():
        return None
    try:
        d = json.loads(sp.read_text())
        return GeoTransform(float(d["origin_x"]), float(d["origin_y"]), float(d["pixel_size"]))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad geotransform sidecar: {exc}", path=sp) from exc


_ASCII_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def read_ascii_grid(path, kind: str = "elevation", sidecar: bool = True) -> Raster:
    """Parse an ESRI ASCII grid.  ``xllcenter``/``yllcenter`` are accepted too."""
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    header = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        key = parts[0].lower()
        if key[0].isdigit() or key[0] in "-+.":
            break
        if len(parts) != 2:
            raise FormatError(f"malformed header line {lines[i]!r}", i + 1, path)
        if key not in _ASCII_KEYS + ("xllcenter", "yllcenter"):
            raise FormatError(f"unknown header key {parts[0]!r}", i + 1, path)
        try:
            header[key] = (float(parts[1]), i + 1)
        except ValueError:
            raise FormatError(f"non-numeric value for {parts[0]}", i + 1, path) from None
        i += 1
    for req in ("ncols", "nrows", "cellsize"):
        if req not in header:
            raise FormatError(f"missing header key {req}", i + 1, path)
    ncols, lc = header["ncols"]
    nrows, lr = header["nrows"]
    if ncols != int(ncols) or ncols < 1:
        raise FormatError("ncols must be a positive integer", lc, path)
    if nrows != int(nrows) or nrows < 1:
        raise FormatError("nrows must be a positive integer", lr, path)
    ncols, nrows = int(ncols), int(nrows)
    ps = header["cellsize"][0]
    if not ps > 0:
        raise FormatError("cellsize must be positive", header["cellsize"][1], path)
    if "xllcenter" in header:
        ox = header["xllcenter"][0]
    elif "xllcorner" in header:
        ox = header["xllcorner"][0] + ps / 2
    else:
        raise FormatError("missing header key xllcorner", i + 1, path)
    if "yllcenter" in header:
        oy = header["yllcenter"][0]
    elif "yllcorner" in header:
        oy = header["yllcorner"][0] + ps / 2
    else:
        raise FormatError("missing header key yllcorner", i + 1, path)
    nodata = header["nodata_value"][0] if "nodata_value" in header else None

    rows = []
    for j in range(i, len(lines)):
        parts = lines[j].split()
        if not parts:
            continue
        if len(parts) != ncols:
            raise FormatError(f"expected {ncols} values, found {len(parts)}", j + 1, path)
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise FormatError("non-numeric cell value", j + 1, path) from None
        if len(rows) > nrows:
            raise FormatError(f"more than nrows={nrows} data rows", j + 1, path)
    if len(rows) != nrows:
        raise FormatError(f"expected {nrows} data rows, found {len(rows)}", len(lines), path)
    data = np.array(rows, dtype=float)[::-1]
    gt = GeoTransform(ox, oy, ps)
    if sidecar:
        sc = read_sidecar(path)
        if sc is not None:
            if abs(sc.pixel_size - ps) > 1e-9 or abs(sc.origin_x - ox) > 1e-6 or abs(sc.origin_y - oy) > 1e-6:
                raise FormatError("sidecar disagrees with grid header", path=path)
            gt = sc
    if kind in ("label", "mask"):
        if not np.all(data == np.round(data)):
            raise FormatError("label grid holds non-integer values", path=path)
        if nodata is not None:
            nodata = int(nodata)
    return Raster(data, gt, nodata, kind)


def _fmt(v) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_ascii_grid(r: Raster, path, sidecar: bool = True):
    """Write a scalar raster.  Values use shortest round-trip repr, so reads are exact."""
    if r.data.ndim != 2:
        raise RasterKindError(f"ASCII grid holds scalar rasters only, got {r.kind}")
    path = Path(path)
    gt = r.transform
    out = [
        f"ncols {r.width}",
        f"nrows {r.height}",
        f"xllcorner {gt.origin_x - gt.pixel_size / 2!r}",
        f"yllcorner {gt.origin_y - gt.pixel_size / 2!r}",
        f"cellsize {gt.pixel_size!r}",
    ]
    if r.nodata is not None:
        out.append(f"NODATA_value {_fmt(r.nodata)}")
    data = r.data
    if r.kind in ("label", "mask"):
        body = [" ".join(str(int(v)) for v in row) for row in data[::-1]]
    else:
        body = [" ".join(_fmt(v) for v in row) for row in data[::-1]]
    path.write_text("\n".join(out + body) + "\n")
    if sidecar:
        write_sidecar(gt, path)


def _ppm_tokens(buf: bytes, n: int):
    """First ``n`` whitespace-separated header tokens and the payload offset."""
    toks = []
    i = 0
    while len(toks) < n:
        while i < len(buf) and buf[i : i + 1].isspace():
            i += 1
        if i < len(buf) and buf[i : i + 1] == b"#":
            while i < len(buf) and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(buf) and not buf[j : j + 1].isspace() and buf[j : j + 1] != b"#":
            j += 1
        if j == i:
            raise FormatError("truncated PPM header")
        toks.append(buf[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    if i >= len(buf) or not buf[i : i + 1].isspace():
        raise FormatError("truncated PPM header")
    return toks, i + 1


def read_ppm(path, sidecar: bool = True) -> Raster:
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] != b"P6":
        raise FormatError(f"not a binary P6 PPM (magic {buf[:2]!r})", 1, path)
    try:
        toks, off = _ppm_tokens(buf, 4)
        w, h, maxval = (int(t) for t in toks[1:4])
    except FormatError as exc:
        raise FormatError(str(exc), 1, path) from None
    except ValueError:
        raise FormatError("non-integer PPM header field", 1, path) from None
    if maxval != 255:
        raise FormatError(f"only 8-bit PPM supported, maxval={maxval}", 1, path)
    if w < 1 or h < 1:
        raise FormatError("PPM dimensions must be positive", 1, path)
    need = w * h * 3
    payload = buf[off:]
    if len(payload) < need:
        raise FormatError(f"truncated payload: {len(payload)} of {need} bytes", path=path)
    img = np.frombuffer(payload[:need], dtype=np.uint8).reshape(h, w, 3)[::-1]
    gt = (read_sidecar(path) if sidecar else None) or GeoTransform()
    return Raster(img, gt, None, "rgb")


def write_ppm(r: Raster, path, sidecar: bool = True):
    if r.kind != "rgb":
        raise RasterKindError(f"PPM holds rgb rasters only, got {r.kind}")
    path = Path(path)
    header = f"P6\n{r.width} {r.height}\n255\n".encode()
    path.write_bytes(header + np.ascontiguousarray(r.data[::-1]).tobytes())
    if sidecar:
        write_sidecar(r.transform, path)
