"""Preamble detection, polarity and calibration, gesture windows.

A session starts with a preamble: the hand is held over the device (a drop
in RSSI) and then moved up and down a fixed number of times.  Detection runs
in two stages.  Stage 1 is a running-mean test that costs O(1) per sample:
the mean over the last ``drop_window_s`` moves at least
``drop_threshold_db`` away from the mean of the 2 s before it.  Stage 2
denoises a bounded stretch around the trigger and looks for the drop edge
followed by ``2 * preamble_updown_count`` alternating edges.

The direction of the first change fixes the session polarity: a rise
instead of a drop means the device sees inverted RSSI changes, and every
decoded edge is swapped from then on.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .denoise import DenoiseConfig, denoise_signal
from .gestures import ACTIVITY_FRACTION
from .primitives import ExtractorConfig, Kind, detect_edges, select_analysis_level
from .trace import RssiTrace
from .wavelet import max_level

BASELINE_S = 2.0
HISTORY_S = 10.0
MAX_EDGE_GAP_S = 1.0
RELEASE_S = 1.5  # room after the budget for the closing move back to the baseline
AMPLITUDE_RATIO = 0.5  # smallest stroke-to-drop amplitude ratio in a preamble train
LEVEL_TOLERANCE = 0.5  # allowed drift of the swing levels, as a fraction of the drop
# stage-2 edges must reach this fraction of the drop threshold
EDGE_FLOOR_FRACTION = 0.5
WINDOW_PAD_S = 0.25
ACTIVITY_CHUNK_S = 30.0


class Direction:
    DROP = "drop"
    RISE = "rise"


def resolve_polarity(first_state_direction):
    """True when the session must be flipped (the first change was a rise)."""
    if first_state_direction not in (Direction.DROP, Direction.RISE):
        raise ValueError(f"unknown direction {first_state_direction!r}")
    return first_state_direction == Direction.RISE


@dataclass(frozen=True)
class CalibrationProfile:
    preamble_drop_db: float
    motion_level: int
    polarity_flipped: bool
    baseline_rssi_dbm: float

    def __post_init__(self):
        if not self.preamble_drop_db > 0:
            raise ValueError("preamble_drop_db must be positive")
        if self.motion_level < 1:
            raise ValueError("motion_level must be >= 1")


@dataclass(frozen=True)
class GestureWindow:
    start_s: float
    end_s: float
    calibration: CalibrationProfile

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValueError("window must have end_s > start_s")


@dataclass(frozen=True)
class SegmenterConfig:
    drop_threshold_db: float = 5.0
    preamble_updown_count: int = 2
    silence_timeout_s: float = 2.0
    drop_window_s: float = 0.5

    def __post_init__(self):
        for name in ("drop_threshold_db", "silence_timeout_s", "drop_window_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.preamble_updown_count < 1:
            raise ValueError("preamble_updown_count must be >= 1")

    @property
    def search_budget_s(self):
        """Time after the trigger within which the peak train must finish."""
        return max(4.0, 1.0 + 1.5 * self.preamble_updown_count)

    @property
    def lookahead_s(self):
        """Samples needed after the trigger: the budget plus the release stroke."""
        return self.search_budget_s + RELEASE_S


@dataclass(frozen=True)
class PreambleDetection:
    trigger_s: float
    start_s: float
    end_s: float
    calibration: CalibrationProfile


class PreambleDetector:
    """Streaming two-stage preamble detector for one AP.

    Feed samples in chunks of any size; detections are returned as soon as
    enough samples after the trigger have arrived.  Only the last
    ``HISTORY_S`` seconds are kept.
    """

    def __init__(self, config=SegmenterConfig(), sample_rate_hz=50.0, start_time_s=0.0):
        self.config = config
        self.rate = float(sample_rate_hz)
        self.t0 = float(start_time_s)
        self.w = max(1, int(round(config.drop_window_s * self.rate)))
        self.b = max(1, int(round(BASELINE_S * self.rate)))
        self.ahead = int(round(config.lookahead_s * self.rate))
        self.keep = max(int(round(HISTORY_S * self.rate)), self.w + self.b + self.ahead + 1)
        self._buf = np.empty(0)
        self._base = 0  # absolute index of _buf[0]
        self._scan = self.w + self.b - 1  # next absolute index to test
        self._armed = True
        self._resume = 0  # no triggers before this absolute index

    @property
    def n_seen(self):
        return self._base + self._buf.size

    def time_of(self, index):
        return self.t0 + index / self.rate

    def feed(self, samples):
        chunk = np.asarray(samples, dtype=float).ravel()
        self._buf = np.concatenate([self._buf, chunk])
        found = self._run(final=False)
        drop = self._buf.size - self.keep
        if drop > 0:
            lowest = min(self._scan - self.w - self.b, self.n_seen - self.keep)
            drop = max(0, min(drop, lowest - self._base))
            self._buf = self._buf[drop:]
            self._base += drop
        return found

    def finish(self):
        """Flush a pending trigger using whatever samples remain."""
        return self._run(final=True)

    def _deviation(self, lo, hi):
        """Window-minus-baseline mean for absolute indices lo..hi-1."""
        c = np.concatenate([[0.0], np.cumsum(self._buf)])
        idx = np.arange(lo, hi) - self._base + 1
        win = (c[idx] - c[idx - self.w]) / self.w
        base = (c[idx - self.w] - c[idx - self.w - self.b]) / self.b
        return win - base, base

    def _run(self, final):
        found = []
        end = self.n_seen
        while self._scan < end:
            lo = max(self._scan, self._resume)
            if lo >= end:
                self._scan = end
                break
            dev, _ = self._deviation(lo, end)
            hit = np.abs(dev) >= self.config.drop_threshold_db
            i = lo
            for k in range(dev.size):
                if not hit[k]:
                    self._armed = True
                    continue
                if self._armed:
                    i = lo + k
                    break
            else:
                self._scan = end
                break
            if i + self.ahead >= end and not final:
                self._scan = i
                break
            self._armed = False
            self._scan = i + 1
            det = self._stage2(i)
            if det is not None:
                found.append(det)
                self._resume = int(np.ceil((det.end_s - self.t0) * self.rate))
                self._scan = max(self._scan, self._resume)
                self._armed = True
        return found

    def _stage2(self, i):
        _, base = self._deviation(i, i + 1)
        lo = max(self._base, i - self.w - self.b // 2)
        hi = min(self.n_seen, i + self.ahead + 1)
        seg = self._buf[lo - self._base : hi - self._base]
        return find_peak_train(seg, self.time_of(lo), self.rate, self.time_of(i), float(base[0]), self.config)


def _denoise_segment(x):
    levels = min(DenoiseConfig().levels, max_level(x.size))
    if levels < 1:
        return x.copy(), 0.0
    return denoise_signal(x, DenoiseConfig(levels=levels), return_sigma=True)


def find_peak_train(x, start_s, rate, trigger_s, baseline_dbm, config=SegmenterConfig()):
    """Stage 2 on raw samples ``x``: drop edge then the alternating train.

    Returns a :class:`PreambleDetection` or None.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 16:
        return None
    clean, sigma = _denoise_segment(x)
    ext = ExtractorConfig(noise_sigma=sigma, min_edge_db=EDGE_FLOOR_FRACTION * config.drop_threshold_db)
    best = select_analysis_level(x, ext.max_level, ext.min_level, ext.analysis_level, sigma).level
    top = max_level(x.size)
    # the pattern is known, so a neighbouring level gets a second chance when noise tips the choice
    for level in (best, best - 1, best + 1):
        if ext.min_level <= level <= min(ext.max_level, top):
            found = _train_at(x, clean, start_s, rate, trigger_s, baseline_dbm, config, ext, level)
            if found is not None:
                return found
    return None


def _train_at(x, clean, start_s, rate, trigger_s, baseline_dbm, config, ext, level):
    raw_trace = RssiTrace("seg", x, rate, start_s)
    edges = detect_edges(RssiTrace("seg", clean, rate, start_s), ext, level=level, reference=x)
    window_s = config.drop_window_s
    # the drop edge must be the one the running mean just reacted to
    first = None
    for k, e in enumerate(edges):
        if trigger_s - window_s - BASELINE_S / 2 <= e.center_s <= trigger_s + window_s:
            first = k
            break
    if first is None:
        return None
    lead = edges[first]
    sign = lead.kind
    need = 2 * config.preamble_updown_count
    train = [lead]
    level_db = lead.amplitude_db  # distance from the baseline, along the lead's direction
    for e in edges[first + 1 :]:
        expected = sign.flipped() if len(train) % 2 == 1 else sign
        if e.kind is not expected or e.start_s - train[-1].end_s > MAX_EDGE_GAP_S:
            break
        # the hand swings between the same two levels, so strokes match the drop
        # in size and never wander off: after every stroke the running level
        # sits near either the hold level or the baseline
        ratio = e.amplitude_db / lead.amplitude_db
        if not AMPLITUDE_RATIO <= ratio <= 1.0 / AMPLITUDE_RATIO:
            break
        level_db += e.amplitude_db if e.kind is sign else -e.amplitude_db
        target = lead.amplitude_db if len(train) % 2 == 0 else 0.0
        if abs(level_db - target) > LEVEL_TOLERANCE * lead.amplitude_db:
            break
        train.append(e)
        if len(train) == need + 1:
            break
    if len(train) < need + 1 or train[-1].end_s - trigger_s > config.search_budget_s:
        return None
    end_s = train[-1].end_s
    # the closing move back to the baseline belongs to the preamble too
    rest = edges[first + len(train) :]
    if rest and rest[0].kind is sign.flipped() and rest[0].start_s - end_s <= MAX_EDGE_GAP_S:
        end_s = rest[0].end_s
    hold = _plateau(clean, raw_trace, lead, train[1])
    drop = abs(baseline_dbm - hold)
    if not drop > 0:
        return None
    direction = Direction.DROP if sign is Kind.FALLING else Direction.RISE
    calib = CalibrationProfile(float(drop), int(level), resolve_polarity(direction), float(baseline_dbm))
    return PreambleDetection(float(trigger_s), float(lead.start_s), float(end_s), calib)


def _plateau(clean, trace, a, b):
    i0 = trace.index_of(a.end_s)
    i1 = trace.index_of(b.start_s)
    i0, i1 = max(0, min(i0, clean.size - 1)), max(0, min(i1, clean.size))
    if i1 <= i0:
        return float(clean[i0])
    return float(np.median(clean[i0:i1]))


def detect_preambles(trace, config=SegmenterConfig(), start_s=None):
    """Every preamble found by streaming ``trace`` through the detector."""
    det = PreambleDetector(config, trace.sample_rate_hz, trace.start_time_s)
    if start_s is not None:
        det._resume = max(0, trace.index_of(start_s))
    found = det.feed(trace.samples)
    return found + det.finish()


def next_preamble(trace, config=SegmenterConfig(), start_s=None):
    """First :class:`PreambleDetection` at or after ``start_s``, or None.

    Samples are streamed one second at a time and scanning stops at the
    first detection.
    """
    i0, resume = 0, 0
    if start_s is not None:
        resume = max(0, trace.index_of(start_s))
        # earlier samples only serve as the baseline
        i0 = max(0, resume - int(round((BASELINE_S + config.drop_window_s) * trace.sample_rate_hz)))
    det = PreambleDetector(config, trace.sample_rate_hz, trace.time_of(i0))
    det._resume = resume - i0
    step = max(1, int(round(trace.sample_rate_hz)))
    x = trace.samples[i0:]
    for i in range(0, x.size, step):
        found = det.feed(x[i : i + step])
        if found:
            return found[0]
    found = det.finish()
    return found[0] if found else None


def detect_preamble(trace, config=SegmenterConfig(), start_s=None):
    """First preamble at or after ``start_s``: ``(end_s, calibration)`` or None."""
    found = next_preamble(trace, config, start_s)
    return None if found is None else (found.end_s, found.calibration)


def calibrate_at(trace, detection, config=SegmenterConfig()):
    """Calibration of another AP for a preamble found on a reference AP.

    Re-runs stage 2 at the reference trigger; if the train is not visible
    on this AP, falls back to the raw level change at the trigger.
    """
    rate = trace.sample_rate_hz
    i = trace.index_of(detection.trigger_s)
    w = max(1, int(round(config.drop_window_s * rate)))
    b = max(1, int(round(BASELINE_S * rate)))
    x = trace.samples
    if i - w - b + 1 < 0 or i >= x.size:
        return None
    base = float(np.mean(x[i - w - b + 1 : i - w + 1]))
    lo = max(0, i - w - b // 2)
    hi = min(x.size, i + int(round(config.lookahead_s * rate)) + 1)
    found = find_peak_train(x[lo:hi], trace.time_of(lo), rate, detection.trigger_s, base, config)
    if found is not None:
        return found.calibration
    # no usable train here: measure the hold level against the baseline
    i0 = trace.index_of(detection.start_s)
    seg = x[max(0, i0) : max(0, i0) + int(round((config.drop_window_s + 0.5) * rate))]
    if seg.size == 0:
        return None
    hold = float(np.min(seg)) if not detection.calibration.polarity_flipped else float(np.max(seg))
    change = hold - base
    drop = abs(change)
    if not drop > 0:
        return None
    flipped = resolve_polarity(Direction.RISE if change > 0 else Direction.DROP)
    return CalibrationProfile(drop, detection.calibration.motion_level, flipped, base)


def segment_gestures(trace, preamble_end_s, calibration, config=SegmenterConfig(), extractor=ExtractorConfig(),
                     denoised=None):
    """The gesture window following a preamble, as a list of 0 or 1 windows.

    The window opens at the first edge after ``preamble_end_s`` and closes
    once no edge has occurred for ``silence_timeout_s``.  If nothing
    happens within the timeout, no window is returned.  After closing, the
    caller returns to preamble scanning.
    """
    edges = activity_edges(trace, preamble_end_s, calibration, config, extractor, denoised)
    return window_from_edges(edges, preamble_end_s, calibration, config, trace.end_time_s)


def window_from_edges(edges, preamble_end_s, calibration, config=SegmenterConfig(), end_time_s=float("inf")):
    """Gesture window (0 or 1) spanned by time-ordered activity ``edges``.

    The edges may come from several APs; the window then closes only when
    every AP has been silent for the timeout.
    """
    edges = sorted(edges, key=lambda e: e.start_s)
    window = _first_window(edges, preamble_end_s, config.silence_timeout_s)
    if window is None:
        return []
    start, end = window
    start = max(preamble_end_s, start - WINDOW_PAD_S)
    end = min(end_time_s, end + WINDOW_PAD_S)
    return [GestureWindow(float(start), float(end), calibration)] if end > start else []


def activity_edges(trace, preamble_end_s, calibration, config=SegmenterConfig(), extractor=ExtractorConfig(),
                   denoised=None):
    """Edges after ``preamble_end_s`` strong enough to count as gesture activity.

    The search stretch grows in steps of ``ACTIVITY_CHUNK_S`` while edges
    keep arriving near its end, so cost stays bounded by the session length.
    """
    stop = preamble_end_s + ACTIVITY_CHUNK_S
    while True:
        edges = _edges_between(trace, preamble_end_s, stop, calibration, extractor, denoised)
        last = max((e.end_s for e in edges), default=preamble_end_s)
        if stop >= trace.end_time_s or stop - last > config.silence_timeout_s + MAX_EDGE_GAP_S:
            return edges
        stop += ACTIVITY_CHUNK_S


def _edges_between(trace, t0, t1, calibration, extractor, denoised):
    raw = trace.slice_time(t0 - 1.0, t1)
    if len(raw) < 16:
        return []
    if denoised is None:
        clean, sigma = _denoise_segment(raw.samples)
    else:
        clean = denoised.slice_time(t0 - 1.0, t1).samples
        sigma = extractor.noise_sigma if extractor.noise_sigma is not None else 0.0
    floor = max(extractor.min_edge_db, ACTIVITY_FRACTION * calibration.preamble_drop_db)
    ext = replace(extractor, noise_sigma=sigma, min_edge_db=floor)
    level = select_analysis_level(raw.samples, ext.max_level, ext.min_level, ext.analysis_level, sigma).level
    edges = detect_edges(raw.with_samples(clean), ext, level=level)
    return [e for e in edges if e.center_s > t0]


def _first_window(edges, opened_s, timeout_s):
    start = end = None
    last = opened_s
    for e in edges:
        if e.start_s - last > timeout_s:
            break
        if start is None:
            start = e.start_s
        end = max(end or e.end_s, e.end_s)
        last = end
    return None if start is None else (start, end)
