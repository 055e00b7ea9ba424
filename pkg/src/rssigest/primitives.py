"""Rising edges, falling edges and pauses extracted from a denoised trace.

Edges are found as extrema of the Haar detail at an analysis level picked
from a scale-normalised scalogram.  A rising RSSI produces a negative
detail (local minimum), a falling RSSI a positive one.  Each detection is
then measured on the trace itself: its plateau-to-plateau amplitude and
its duration, the 25%..75% transition time divided by ``CROSSING_SPAN``.
That divisor is the share of a smooth S-shaped hand-motion ramp spent
between its 25% and 75% points, so the result approximates the full
motion time rather than just its steep middle.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.ndimage import maximum_filter, uniform_filter1d
from scipy.signal import find_peaks

from .wavelet import dwt_decompose, haar_detail_dense, max_level

HIGH_SPEED_MAX_S = 0.75
LOW_SPEED_MIN_S = 1.5
DEFAULT_LEVEL = 5
LOBE_CUTOFF = 0.05
CROSSING_LO, CROSSING_HI = 0.25, 0.75
CROSSING_SPAN = 0.36
SCALE_POWER = 2.0
SPLIT_FACTOR = 4.0
NOISE_GATE = 3.0
PLATEAU_SAMPLES = 4
POOL_MIN_EDGES = 3
AMPLITUDE_SIGNIFICANCE = 3.0  # edge amplitude vs the noise of its plateau means


class Kind(str, Enum):
    RISING = "rising"
    FALLING = "falling"
    PAUSE = "pause"

    @property
    def is_edge(self):
        return self is not Kind.PAUSE

    def flipped(self):
        if self is Kind.RISING:
            return Kind.FALLING
        if self is Kind.FALLING:
            return Kind.RISING
        return self


class Speed(str, Enum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"
    NA = "na"


class Magnitude(str, Enum):
    HIGH = "high"
    LOW = "low"
    NA = "na"


def speed_class(duration_s):
    if duration_s < HIGH_SPEED_MAX_S:
        return Speed.HIGH
    if duration_s <= LOW_SPEED_MIN_S:
        return Speed.MEDIUM
    return Speed.LOW


@dataclass(frozen=True)
class PrimitiveEvent:
    kind: Kind
    start_s: float
    end_s: float
    amplitude_db: float = 0.0
    speed: Speed = Speed.NA
    magnitude: Magnitude = Magnitude.NA

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValueError(f"event must have end_s > start_s, got [{self.start_s}, {self.end_s}]")
        if self.kind is Kind.PAUSE and (self.speed is not Speed.NA or self.magnitude is not Magnitude.NA):
            raise ValueError("pauses carry no speed or magnitude")
        if self.kind.is_edge and self.speed is Speed.NA:
            raise ValueError("edges need a speed class")

    @property
    def duration_s(self):
        return self.end_s - self.start_s

    @property
    def center_s(self):
        return 0.5 * (self.start_s + self.end_s)

    def flipped(self):
        return replace(self, kind=self.kind.flipped())

    def overlap_s(self, other):
        return max(0.0, min(self.end_s, other.end_s) - max(self.start_s, other.start_s))


def flip_primitives(events):
    return [e.flipped() for e in events]


@dataclass(frozen=True)
class ExtractorConfig:
    analysis_level: int = DEFAULT_LEVEL
    dynamic_level: bool = True
    min_level: int = 2
    max_level: int = 7
    peak_prominence_factor: float = 2.0
    pause_variance_db2: float = 1.0
    pause_min_s: float = 0.5
    magnitude_fraction: float = 0.7
    min_edge_db: float = 1.0
    # a hand stroke lasts far longer; shorter "edges" are noise spikes
    min_edge_s: float = 0.1
    # edges weaker than this fraction of the strongest edge found are dropped
    relative_floor: float = 0.25
    # noise sigma of the raw trace; estimated from the input when None
    noise_sigma: float | None = None

    def __post_init__(self):
        if self.analysis_level < 1 or self.min_level < 1 or self.max_level < self.min_level:
            raise ValueError("invalid level settings")
        for name in ("peak_prominence_factor", "pause_variance_db2", "pause_min_s", "magnitude_fraction", "min_edge_db", "min_edge_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.relative_floor < 1:
            raise ValueError("relative_floor must lie in [0, 1)")


class LevelChoice(NamedTuple):
    level: int
    motion: bool


def scalogram(x, levels, scale_power=SCALE_POWER):
    """Scale-normalised Haar detail energy on a common time grid.

    Row ``i`` holds level ``levels[i]``: the squared detail of a window of
    2**level samples, hopped by half a window, divided by
    2**(scale_power * level) and held on the grid of the finest hop.
    Returns ``(energy, grid)`` with grid in samples.
    """
    x = np.asarray(x, dtype=float)
    levels = list(levels)
    step = 2 ** (min(levels) - 1)
    grid = np.arange(0, x.size, step)
    rows = []
    for level in levels:
        hop = 2 ** (level - 1)
        dense = haar_detail_dense(x, level)
        centres = np.arange(0, x.size, hop)
        e = dense[centres] ** 2 / 2.0 ** (scale_power * level)
        rows.append(e[np.minimum(grid // hop, e.size - 1)])
    return np.array(rows), grid


def select_analysis_level(trace_or_samples, max_level_=7, min_level=2, default=DEFAULT_LEVEL, noise_sigma=0.0):
    """Level whose 2-D local maxima in the scalogram carry the most energy.

    With ``noise_sigma`` > 0, energy below that of a ``NOISE_GATE * sigma``
    detail is discarded first, so residual noise and denoising artefacts at
    fine levels do not outvote the motion itself.
    """
    x = np.asarray(getattr(trace_or_samples, "samples", trace_or_samples), dtype=float)
    top = min(max_level_, max_level(x.size))
    lo = min(min_level, top)
    if top < 1:
        return LevelChoice(default, False)
    levels = list(range(lo, top + 1))
    energy, _ = scalogram(x, levels)
    floor = (NOISE_GATE * noise_sigma) ** 2 / 2.0 ** (SCALE_POWER * np.array(levels, dtype=float))
    energy = np.maximum(energy - floor[:, None], 0.0)
    if energy.max() <= 1e-12 * max(1.0, float(np.mean(x * x))):
        return LevelChoice(default, False)
    peaks = (energy == maximum_filter(energy, size=3, mode="nearest")) & (energy > 0)
    scores = np.where(peaks, energy, 0.0).sum(axis=1)
    # ties resolve to the finer level
    return LevelChoice(levels[int(np.argmax(scores))], True)


def _noise_sigma(x, config):
    if config.noise_sigma is not None:
        return float(config.noise_sigma)
    if x.size < 16:
        return 0.0
    d1 = dwt_decompose(x, 1).details[0]
    return float(np.median(np.abs(d1)) / 0.6745)


def _resolve_level(x, config, level, sigma=0.0):
    top = max(1, min(config.max_level, max_level(x.size)))
    if level is None:
        if config.dynamic_level:
            level = select_analysis_level(x, top, config.min_level, config.analysis_level, sigma).level
        else:
            level = config.analysis_level
    return max(1, min(level, top))


def _lobes(r, peaks):
    """Region of each peak of ``r`` where it stays above the cutoff.

    Neighbouring peaks split at the minimum between them.
    """
    out = []
    n = r.size
    for j, p in enumerate(peaks):
        cut = LOBE_CUTOFF * r[p]
        left_limit = 0
        if j > 0:
            q = peaks[j - 1]
            left_limit = q + int(np.argmin(r[q : p + 1]))
        right_limit = n - 1
        if j + 1 < len(peaks):
            q = peaks[j + 1]
            right_limit = p + int(np.argmin(r[p : q + 1]))
        a = p
        while a > left_limit and r[a - 1] > cut:
            a -= 1
        b = p
        while b < right_limit and r[b + 1] > cut:
            b += 1
        out.append((a, b))
    return out


def _crossing(y, i, level):
    """Fractional index where ``y`` crosses ``level`` between i and i+1."""
    y0, y1 = y[i], y[i + 1]
    if y1 == y0:
        return float(i)
    return i + float(np.clip((level - y0) / (y1 - y0), 0.0, 1.0))


def _measure(y, a, b):
    """Amplitude and 25%..75% crossing points of a rising lobe of ``y``.

    Each crossing is the mean of the one found walking out from the
    midpoint and the one found walking in from the lobe boundary; noise
    biases these in opposite directions.
    """
    a = max(a, 0)
    b = min(b, y.size - 1)
    if b - a < 1:
        return None
    m = max(1, min(PLATEAU_SAMPLES, (b - a) // 8))
    pre, post = float(np.mean(y[a : a + m])), float(np.mean(y[b - m + 1 : b + 1]))
    amp = post - pre
    if amp <= 0:
        return None
    seg = y[a : b + 1]
    mid = a + int(np.argmax(seg >= pre + 0.5 * amp))
    lo = pre + CROSSING_LO * amp
    hi = pre + CROSSING_HI * amp
    i = mid
    while i > a and y[i - 1] > lo:
        i -= 1
    lo_in = _crossing(y, i - 1, lo) if i > a else float(a)
    k = a + int(np.argmax(seg > lo))
    lo_out = _crossing(y, k - 1, lo) if k > a else float(a)
    j = mid
    while j < b and y[j] < hi:
        j += 1
    hi_in = _crossing(y, j - 1, hi) if j > a else float(j)
    k = b - int(np.argmax(seg[::-1] < hi))
    hi_out = _crossing(y, k, hi) if k < b else float(b)
    t_lo = 0.5 * (lo_in + lo_out)
    t_hi = 0.5 * (hi_in + hi_out)
    return amp, t_lo, max(t_hi, t_lo)


def detect_edges(trace, config=ExtractorConfig(), level=None, reference=None):
    """Rising and falling edges of ``trace`` in time order.

    Detection runs on ``trace``.  If the raw ``reference`` it was denoised
    from is given, amplitudes and spans are measured on a short moving
    average of it instead: shrinkage flattens slow, weak ramps into
    staircases, which would understate both.
    """
    x = np.asarray(trace.samples, dtype=float)
    if x.size < 4:
        return []
    sigma = _noise_sigma(x, config)
    level = _resolve_level(x, config, level, sigma)
    c = haar_detail_dense(x, level)
    ym, raw, width = x, None, 1
    if reference is not None:
        raw = np.asarray(getattr(reference, "samples", reference), dtype=float)
        if raw.size == x.size:
            width = max(1, 2 ** (level - 2))
            ym = uniform_filter1d(raw, width, mode="nearest")
        else:
            raw = None
    smoothed = {width: ym}
    thr = max(config.peak_prominence_factor * sigma, 0.1 * config.min_edge_db)
    # same-sign transitions stay separate only across a clearly flat stretch
    split_thr = max(SPLIT_FACTOR * config.peak_prominence_factor * sigma, 0.1 * config.min_edge_db)
    fine_level = max(1, level - 2)
    cf = haar_detail_dense(x, fine_level) if fine_level < level else None
    found = []
    for kind, sign in ((Kind.RISING, 1.0), (Kind.FALLING, -1.0)):
        r = -sign * c
        peaks, _ = find_peaks(r, height=thr, prominence=thr)
        y = sign * ym
        for a, b in _merge_close(r, _lobes(r, peaks), peaks, split_thr):
            for pa, pb in _split(cf, sign, a, b, split_thr, y, config):
                m = _measure(y, pa, pb)
                if m is None:
                    continue
                used = width
                if raw is not None:
                    m, used = _remeasure(m, raw, smoothed, width, sign, pa, pb)
                amp, t_lo, t_hi = m
                # sigma describes the raw trace, so the floor only applies to raw measurements
                noise_floor = _amplitude_floor(sigma, used, pa, pb) if raw is not None else 0.0
                if amp < max(config.min_edge_db, noise_floor):
                    continue
                span = max((t_hi - t_lo) / CROSSING_SPAN, 1.0)
                center = 0.5 * (t_lo + t_hi)
                start_s = trace.time_of(max(center - 0.5 * span, 0.0))
                end_s = trace.time_of(min(center + 0.5 * span, x.size - 1.0))
                if end_s - start_s < config.min_edge_s:
                    continue
                found.append(PrimitiveEvent(kind, float(start_s), float(end_s), float(amp), speed_class(end_s - start_s)))
    if found:
        strongest = max(e.amplitude_db for e in found)
        found = [e for e in found if e.amplitude_db >= config.relative_floor * strongest]
    found.sort(key=lambda e: e.start_s)
    return _resolve_overlaps(found)


def _remeasure(m, raw, smoothed, width, sign, a, b):
    """Measure again with a boxcar no wider than the edge's own span.

    A coarse analysis level (picked for, say, a staircase of same-sign
    edges) brings a boxcar wide enough to stretch a fast ramp.  Returns
    the measurement and the boxcar width it used.
    """
    span = m[2] - m[1]
    narrow = 2 ** int(np.floor(np.log2(span))) if span >= 1.0 else 1
    # below the default level's width noise costs more than stretching does
    narrow = max(narrow, 2 ** (DEFAULT_LEVEL - 2))
    if narrow >= width:
        return m, width
    if narrow not in smoothed:
        smoothed[narrow] = uniform_filter1d(raw, narrow, mode="nearest")
    again = _measure(sign * smoothed[narrow], a, b)
    return (m, width) if again is None else (again, narrow)


def _amplitude_floor(sigma, width, a, b):
    """Smallest amplitude distinguishable from noise in the two plateau means.

    Each plateau averages ``m`` boxcar outputs of ``width`` raw samples,
    about ``width + m - 1`` independent ones.
    """
    m = max(1, min(PLATEAU_SAMPLES, (b - a) // 8))
    return AMPLITUDE_SIGNIFICANCE * sigma * np.sqrt(2.0 / (width + m - 1))


def _merge_close(r, lobes, peaks, thr):
    """Join touching same-sign lobes whose separating dip is shallow."""
    out = []
    for (a, b), p in zip(lobes, peaks):
        if out and a <= out[-1][1] + 1:
            pa, pb, pp = out[-1]
            dip = r[pb : a + 1].min() if a >= pb else r[a : pb + 1].min()
            if min(r[pp], r[p]) - dip < thr:
                out[-1] = (pa, b, pp if r[pp] >= r[p] else p)
                continue
        out.append((a, b, p))
    return [(a, b) for a, b, _ in out]


def _split(cf, sign, a, b, thr, y, config):
    """Split a lobe holding several same-sign transitions at a finer level."""
    if cf is None or b - a < 4:
        return [(a, b)]
    rf = -sign * cf[a : b + 1]
    peaks, _ = find_peaks(rf, height=thr, prominence=thr)
    if len(peaks) < 2:
        return [(a, b)]
    cuts = [a]
    for p, q in zip(peaks[:-1], peaks[1:]):
        k = p + int(np.argmin(rf[p : q + 1]))
        # equal-height neighbours both get full prominence; demand a real dip
        if min(rf[p], rf[q]) - rf[k] >= thr:
            cuts.append(a + k)
    if len(cuts) < 2:
        return [(a, b)]
    cuts.append(b)
    pieces = list(zip(cuts[:-1], cuts[1:]))
    for pa, pb in pieces:
        if y[pb] - y[pa] < config.min_edge_db:
            return [(a, b)]
    return pieces


def _resolve_overlaps(events):
    out = []
    for e in events:
        if out and e.start_s < out[-1].end_s:
            prev = out[-1]
            mid = 0.5 * (e.start_s + prev.end_s)
            if mid <= prev.start_s or mid >= e.end_s:
                # fully nested: keep the larger transition
                if e.amplitude_db > prev.amplitude_db:
                    out[-1] = e
                continue
            out[-1] = replace(prev, end_s=mid)
            e = replace(e, start_s=mid)
        out.append(e)
    return out


def detect_pauses(trace, config=ExtractorConfig()):
    """Maximal stretches whose 0.5 s windowed variance stays under threshold."""
    x = np.asarray(trace.samples, dtype=float)
    w = int(round(config.pause_min_s * trace.sample_rate_hz))
    if w < 2 or x.size < w:
        return []
    # centre before squaring to keep the variance numerically clean
    xc = x - x.mean()
    c1 = np.concatenate([[0.0], np.cumsum(xc)])
    c2 = np.concatenate([[0.0], np.cumsum(xc * xc)])
    mean = (c1[w:] - c1[:-w]) / w
    var = (c2[w:] - c2[:-w]) / w - mean * mean
    ok = var <= config.pause_variance_db2
    # windows start..stop-1 cover samples start..stop-1+w; runs split by a
    # short noisy stretch overlap, so merge them into one stretch
    merged = []
    for start, stop in _runs(ok):
        end = stop - 1 + w
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    events = []
    for start, end in merged:
        t0, t1 = trace.time_of(start), trace.time_of(end)
        if t1 - t0 >= config.pause_min_s - 1e-9:
            events.append(PrimitiveEvent(Kind.PAUSE, float(t0), float(t1)))
    return events


def _runs(mask):
    """(start, stop) index pairs of the True runs of ``mask``."""
    m = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    d = np.diff(m.astype(np.int8))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def extract_primitives(trace, config=ExtractorConfig(), calibration=None, level=None, reference=None):
    """Time-ordered, non-overlapping edges and interior pauses.

    ``reference`` is the raw trace ``trace`` was denoised from; when given
    (and no explicit level) the analysis level is picked on it, which is
    free of the staircase artefacts shrinkage leaves on slow ramps.
    """
    if level is None and reference is not None and config.dynamic_level:
        raw = np.asarray(getattr(reference, "samples", reference), dtype=float)
        top = max(1, min(config.max_level, max_level(raw.size)))
        sigma = _noise_sigma(raw, config)
        level = select_analysis_level(raw, top, config.min_level, config.analysis_level, sigma).level
    edges = detect_edges(trace, config, level=level, reference=reference)
    if calibration is not None:
        cut = config.magnitude_fraction * calibration.preamble_drop_db
        edges = [
            replace(e, magnitude=Magnitude.HIGH if e.amplitude_db >= cut else Magnitude.LOW) for e in edges
        ]
    if not edges:
        return []
    pauses = interior_pauses(detect_pauses(trace, config), edges, config)
    return sorted(edges + pauses, key=lambda e: e.start_s)


def interior_pauses(pauses, edges, config=ExtractorConfig()):
    """Parts of ``pauses`` left over between time-ordered ``edges``.

    Edges win over pauses; what remains must still last ``pause_min_s``
    and lie after the first and before the last edge.  Each edge claims at
    least the median edge duration around its centre: one hand gesture
    keeps a steady pace, and the pooled duration is far less noisy than a
    single measurement, which would otherwise leave spurious gaps.  With
    fewer than ``POOL_MIN_EDGES`` edges each keeps its own span.
    """
    if not edges:
        return []
    # a median needs at least three values to shrug off one bad measurement
    typical = float(np.median([e.duration_s for e in edges])) if len(edges) >= POOL_MIN_EDGES else 0.0
    spans = []
    for e in edges:
        half = 0.5 * max(e.duration_s, typical)
        spans.append((min(e.start_s, e.center_s - half), max(e.end_s, e.center_s + half)))
    out = []
    for p in pauses:
        for t0, t1 in _subtract(p.start_s, p.end_s, spans):
            if t1 - t0 < config.pause_min_s - 1e-9:
                continue
            if edges[0].end_s <= t0 + 1e-9 and edges[-1].start_s >= t1 - 1e-9:
                out.append(PrimitiveEvent(Kind.PAUSE, float(t0), float(t1)))
    return out


def _subtract(t0, t1, spans):
    pieces = [(t0, t1)]
    for s0, s1 in spans:
        nxt = []
        for a, b in pieces:
            if s1 <= a or s0 >= b:
                nxt.append((a, b))
                continue
            if s0 > a:
                nxt.append((a, s0))
            if s1 < b:
                nxt.append((s1, b))
        pieces = nxt
    return pieces
