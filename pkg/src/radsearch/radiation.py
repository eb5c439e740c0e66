"""Gamma detector model, source templates, measurement sampling and count statistics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import (
    EmptyInputError,
    FormatError,
    ParameterError,
    ProximityError,
    UndefinedStatisticError,
)

N_CHANNELS = 1024
E_MAX_KEV = 3000.0
D_MIN = 0.3

# dominant gamma lines (keV); standard nuclear data
PHOTOPEAKS_KEV = {
    "Cs-137": 661.7,
    "Ba-133": 356.0,
    "Ho-166m": 810.3,
    "K-40": 1460.8,
}
HALF_LIFE_YR = {"Cs-137": 30.2, "Ba-133": 10.7, "Ho-166m": 1200.0}
PEAK_SIGMA_CH = 2.5
CONTINUUM_FRACTION = 0.3


def energy_to_channel(e_kev: float) -> int:
    return min(N_CHANNELS - 1, int(math.floor(e_kev * N_CHANNELS / E_MAX_KEV)))


def nuclide_template(nuclide: str) -> np.ndarray:
    """Gaussian photopeak over a flat continuum holding 30% of the mass."""
    try:
        e = PHOTOPEAKS_KEV[nuclide]
    except KeyError:
        raise ParameterError(f"no spectral template for nuclide {nuclide!r}") from None
    ch = np.arange(N_CHANNELS)
    peak = np.exp(-0.5 * ((ch - energy_to_channel(e)) / PEAK_SIGMA_CH) ** 2)
    peak /= peak.sum()
    tmpl = (1.0 - CONTINUUM_FRACTION) * peak + CONTINUUM_FRACTION / N_CHANNELS
    return tmpl / tmpl.sum()


def background_template() -> np.ndarray:
    """Falling continuum with a small K-40 line."""
    ch = np.arange(N_CHANNELS)
    cont = np.exp(-ch / 180.0)
    cont /= cont.sum()
    k40 = nuclide_template("K-40")
    tmpl = 0.9 * cont + 0.1 * k40
    return tmpl / tmpl.sum()


@dataclass
class RadSource:
    nuclide: str
    activity: float  # microcurie
    position: tuple[float, float, float]
    half_life: float | None = None  # years
    template: np.ndarray | None = None

    def __post_init__(self):
        if self.half_life is None:
            self.half_life = HALF_LIFE_YR.get(self.nuclide)
        if not self.activity > 0:
            raise ParameterError(f"source activity must be positive, got {self.activity}")
        self.position = tuple(float(v) for v in self.position)
        if self.template is None:
            self.template = nuclide_template(self.nuclide)
        t = np.asarray(self.template, dtype=float)
        if t.shape != (N_CHANNELS,) or (t < 0).any() or abs(t.sum() - 1.0) > 1e-9:
            raise ParameterError("source template must be a non-negative 1024-vector summing to 1")
        self.template = t


@dataclass
class DetectorModel:
    background_rate: float
    sensitivity_k: float = 0.0
    background_template: np.ndarray = field(default_factory=background_template)
    d_min: float = D_MIN

    def __post_init__(self):
        if not self.background_rate > 0:
            raise ParameterError("background_rate must be positive")
        if self.sensitivity_k < 0:
            raise ParameterError("sensitivity_k must be non-negative")


@dataclass
class Measurement:
    t: float
    pos: tuple[float, float, float]
    spectrum: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.spectrum)
        if s.shape != (N_CHANNELS,):
            raise ParameterError(f"spectrum must have {N_CHANNELS} channels, got {s.shape}")
        if (s < 0).any():
            raise ParameterError("spectrum channels must be non-negative")
        self.spectrum = s.astype(np.int64)
        self.pos = tuple(float(v) for v in self.pos)

    @property
    def counts(self) -> int:
        return counts(self.spectrum)


def counts(spectrum) -> int:
    return int(np.sum(np.asarray(spectrum, dtype=np.int64)))


def _contributions(det: DetectorModel, sources: Sequence[RadSource], pos) -> np.ndarray:
    p = np.asarray(pos, dtype=float)
    out = np.empty(len(sources))
    for i, s in enumerate(sources):
        d = float(np.linalg.norm(p - np.asarray(s.position)))
        if d < det.d_min:
            raise ProximityError(
                f"position {tuple(p)} is {d:.3f} m from {s.nuclide} source (minimum {det.d_min} m)"
            )
        out[i] = det.sensitivity_k * s.activity / (d * d)
    return out


def expected_rate(det: DetectorModel, sources: Sequence[RadSource], pos) -> float:
    """Mean counts per one-second integration at ``pos``."""
    return det.background_rate + float(np.sum(_contributions(det, sources, pos)))


def sample_measurement(rng: np.random.Generator, det, sources, pos, t) -> Measurement:
    """One-second integration: Poisson total split multinomially over the rate-weighted spectra."""
    contrib = _contributions(det, sources, pos)
    rate = det.background_rate + contrib.sum()
    mix = det.background_rate * det.background_template
    for c, s in zip(contrib, sources):
        mix = mix + c * s.template
    mix = mix / mix.sum()
    total = rng.poisson(rate)
    spec = rng.multinomial(total, mix)
    return Measurement(float(t), tuple(pos), spec)


def sample_measurements(rng, det, sources, positions, times) -> list[Measurement]:
    """Draw a measurement at each position in order; same stream as repeated :func:`sample_measurement`."""
    return [sample_measurement(rng, det, sources, p, t) for p, t in zip(positions, times)]


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    dof: float
    p_value: float
    reject: bool
    alpha: float = 0.05


def _counts_array(xs) -> np.ndarray:
    vals = [x.counts if isinstance(x, Measurement) else x for x in xs]
    return np.asarray(vals, dtype=float)


def welch_t_test(a, b, alpha: float = 0.05) -> TTestResult:
    """Two-sided Welch test of equal means; dof from Welch-Satterthwaite."""
    a = _counts_array(a)
    b = _counts_array(b)
    if len(a) < 2 or len(b) < 2:
        raise EmptyInputError("each sample needs at least 2 values")
    na, nb = len(a), len(b)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    diff = a.mean() - b.mean()
    sa, sb = va / na, vb / nb
    se2 = sa + sb
    if se2 == 0:
        if diff == 0:
            raise UndefinedStatisticError("both samples are constant with equal means")
        return TTestResult(math.copysign(math.inf, diff), float(na + nb - 2), 0.0, True, alpha)
    t = diff / math.sqrt(se2)
    dof = se2**2 / (sa**2 / (na - 1) + sb**2 / (nb - 1))
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), dof)))
    return TTestResult(float(t), float(dof), p, p < alpha, alpha)


def paired_t_test(a, b, alpha: float = 0.05) -> TTestResult:
    a = _counts_array(a)
    b = _counts_array(b)
    if len(a) != len(b):
        raise ParameterError(f"paired test needs equal lengths, got {len(a)} and {len(b)}")
    if len(a) < 2:
        raise EmptyInputError("paired test needs at least 2 pairs")
    d = a - b
    sd = d.std(ddof=1)
    n = len(d)
    if sd == 0:
        if d.mean() == 0:
            raise UndefinedStatisticError("all paired differences are zero")
        return TTestResult(math.copysign(math.inf, d.mean()), float(n - 1), 0.0, True, alpha)
    t = d.mean() / (sd / math.sqrt(n))
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 1)))
    return TTestResult(float(t), float(n - 1), p, p < alpha, alpha)


def max_counts_poi(ms: Sequence[Measurement]):
    """``(index, position, counts)`` of the highest-count measurement; earliest wins ties."""
    if len(ms) == 0:
        raise EmptyInputError("no measurements")
    best = None
    for i, m in enumerate(ms):
        key = (-m.counts, m.t, i)
        if best is None or key < best[0]:
            best = (key, i)
    i = best[1]
    return i, ms[i].pos, ms[i].counts


def median_nearest_k(ms: Sequence[Measurement], point, k: int) -> float:
    """Median counts of the ``k`` measurements nearest to ``point`` in the horizontal plane."""
    if k < 1 or k > len(ms):
        raise ParameterError(f"k must lie in [1, {len(ms)}], got {k}")
    xy = np.array([m.pos[:2] for m in ms], dtype=float)
    d = np.hypot(xy[:, 0] - point[0], xy[:, 1] - point[1])
    idx = np.argsort(d, kind="stable")[:k]
    return float(np.median([ms[i].counts for i in idx]))


@dataclass(frozen=True)
class HistogramBin:
    lo: float
    hi: float
    count: int


def counts_histogram(ms: Iterable, bin_width: float) -> list[HistogramBin]:
    """Fixed-width bins starting at the minimum count; the last bin is closed on the right."""
    if not bin_width > 0:
        raise ParameterError("bin_width must be positive")
    vals = _counts_array(list(ms))
    if vals.size == 0:
        return []
    lo, hi = vals.min(), vals.max()
    nbins = int(math.floor((hi - lo) / bin_width)) + 1
    idx = np.minimum(((vals - lo) // bin_width).astype(int), nbins - 1)
    tally = np.bincount(idx, minlength=nbins)
    return [
        HistogramBin(lo + i * bin_width, lo + (i + 1) * bin_width, int(tally[i])) for i in range(nbins)
    ]


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

MEASUREMENT_HEADER = ["t", "x", "y", "z", "counts"] + [f"c{i}" for i in range(N_CHANNELS)]


def write_measurements_csv(ms: Sequence[Measurement], path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(MEASUREMENT_HEADER)
        for m in ms:
            wr.writerow(
                [repr(m.t)] + [repr(v) for v in m.pos] + [m.counts] + m.spectrum.tolist()
            )


def read_measurements_csv(path) -> list[Measurement]:
    """Load measurements; a stored counts value that disagrees with the channel sum is rejected."""
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != MEASUREMENT_HEADER:
            raise FormatError("unexpected measurements header", 1, path)
        for lineno, row in enumerate(rd, start=2):
            if not row:
                continue
            if len(row) != len(MEASUREMENT_HEADER):
                raise FormatError(f"expected {len(MEASUREMENT_HEADER)} fields, got {len(row)}", lineno, path)
            try:
                t, x, y, z = (float(v) for v in row[:4])
                stored = int(row[4])
                spec = np.array([int(v) for v in row[5:]], dtype=np.int64)
            except ValueError:
                raise FormatError("non-numeric field", lineno, path) from None
            if (spec < 0).any():
                raise FormatError("negative channel count", lineno, path)
            m = Measurement(t, (x, y, z), spec)
            if m.counts != stored:
                raise FormatError(f"counts column {stored} != channel sum {m.counts}", lineno, path)
            out.append(m)
    return out


def write_sources_json(sources: Sequence[RadSource], path):
    payload = [
        {
            "nuclide": s.nuclide,
            "half_life_yr": s.half_life,
            "activity_uci": s.activity,
            "x": s.position[0],
            "y": s.position[1],
            "z": s.position[2],
        }
        for s in sources
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_sources_json(path) -> list[RadSource]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
        return [
            RadSource(
                d["nuclide"],
                float(d["activity_uci"]),
                (float(d["x"]), float(d["y"]), float(d["z"])),
                d.get("half_life_yr"),
            )
            for d in payload
        ]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad sources file: {exc}", path=path) from exc
