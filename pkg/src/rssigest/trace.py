"""RSSI time series types and the trace CSV format.

A trace file has the header ``time_s,ap_id,rssi_dbm`` and one sample per row.
Rows from different access points may be interleaved, but times must be
non-decreasing per access point.
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, TraceFormatError

DEFAULT_SAMPLE_RATE_HZ = 50.0
RSSI_RANGE_DBM = (-120.0, 0.0)
JITTER_TOLERANCE = 0.01  # fraction of one sample period
HEADER = ("time_s", "ap_id", "rssi_dbm")


@dataclass(frozen=True, eq=False)
class RssiTrace:
    """Uniformly sampled RSSI stream of one access point."""

    ap_id: str
    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    start_time_s: float = 0.0

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        samples = np.array(self.samples, dtype=float, copy=True).ravel()
        if not np.all(np.isfinite(samples)):
            raise ValueError("RSSI samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, RssiTrace):
            return NotImplemented
        return (
            self.ap_id == other.ap_id
            and self.sample_rate_hz == other.sample_rate_hz
            and self.start_time_s == other.start_time_s
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None

    @property
    def duration_s(self):
        return len(self) / self.sample_rate_hz

    @property
    def end_time_s(self):
        """Time just past the last sample."""
        return self.time_of(len(self))

    @property
    def times(self):
        return self.start_time_s + np.arange(len(self)) / self.sample_rate_hz

    @property
    def mean_rssi(self):
        return float(np.mean(self.samples))

    def time_of(self, index):
        # computed from the index so long traces accumulate no drift
        return self.start_time_s + index / self.sample_rate_hz

    def index_of(self, time_s):
        return int(round((time_s - self.start_time_s) * self.sample_rate_hz))

    def with_samples(self, samples):
        return replace(self, samples=samples)

    def slice_time(self, start_s, end_s):
        """Sub-trace covering ``[start_s, end_s)`` clipped to the trace."""
        i0 = max(0, self.index_of(start_s))
        i1 = min(len(self), self.index_of(end_s))
        i1 = max(i1, i0)
        return RssiTrace(self.ap_id, self.samples[i0:i1], self.sample_rate_hz, self.time_of(i0))


@dataclass(frozen=True)
class TraceBundle:
    """Traces from every overheard access point on a common clock."""

    traces: tuple = field(default_factory=tuple)

    def __post_init__(self):
        traces = tuple(self.traces)
        object.__setattr__(self, "traces", traces)
        if traces:
            rates = {t.sample_rate_hz for t in traces}
            if len(rates) > 1:
                raise ValueError(f"traces disagree on sample rate: {sorted(rates)}")
            ids = [t.ap_id for t in traces]
            if len(set(ids)) != len(ids):
                raise ValueError("duplicate ap_id in bundle")

    def __len__(self):
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def __getitem__(self, ap_id):
        for t in self.traces:
            if t.ap_id == ap_id:
                return t
        raise KeyError(ap_id)

    @property
    def ap_ids(self):
        return [t.ap_id for t in self.traces]

    @property
    def sample_rate_hz(self):
        return self.traces[0].sample_rate_hz if self.traces else DEFAULT_SAMPLE_RATE_HZ

    @property
    def mean_rssi(self):
        return {t.ap_id: t.mean_rssi for t in self.traces}

    def strongest(self):
        """Trace with the highest mean RSSI (first one on ties)."""
        if not self.traces:
            raise EmptyInputError("bundle has no traces")
        return max(self.traces, key=lambda t: t.mean_rssi)

    def subset(self, ap_ids):
        return TraceBundle(tuple(self[a] for a in ap_ids))


def align(traces):
    """Truncate traces to the intersection of their time ranges."""
    traces = list(traces)
    if len(traces) <= 1:
        return TraceBundle(tuple(traces))
    rate = traces[0].sample_rate_hz
    start = max(t.start_time_s for t in traces)
    end = min(t.end_time_s for t in traces)
    aligned = []
    for t in traces:
        offset = (start - t.start_time_s) * rate
        i0 = int(round(offset))
        if abs(offset - i0) > JITTER_TOLERANCE:
            raise TraceFormatError(f"trace {t.ap_id!r} is not on the common sampling grid")
        n = int(round((end - start) * rate))
        if n <= 0:
            raise TraceFormatError("traces have no overlapping time range")
        aligned.append(RssiTrace(t.ap_id, t.samples[i0 : i0 + n], rate, t.time_of(i0)))
    return TraceBundle(tuple(aligned))


def save_trace(bundle, path):
    """Write ``bundle`` as a trace CSV, rows ordered by time then AP."""
    path = Path(path)
    rows = []
    for order, tr in enumerate(bundle.traces):
        times = tr.times
        for i in range(len(tr)):
            rows.append((times[i], order, tr.ap_id, tr.samples[i]))
    rows.sort(key=lambda r: (r[0], r[1]))
    with path.open("w", newline="") as fh:
        fh.write(",".join(HEADER) + "\n")
        for t, _, ap, v in rows:
            fh.write(f"{t:.4f},{ap},{v:.4f}\n")


def load_trace(path):
    """Read a trace CSV into an aligned :class:`TraceBundle`."""
    path = Path(path)
    per_ap = defaultdict(list)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyInputError(f"{path}: empty file")
        if tuple(h.strip() for h in header) != HEADER:
            raise TraceFormatError(f"bad header {header!r}, expected {','.join(HEADER)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise TraceFormatError(f"expected 3 fields, got {len(row)}", line=lineno)
            try:
                t = float(row[0])
                v = float(row[2])
            except ValueError as exc:
                raise TraceFormatError(str(exc), line=lineno) from None
            ap = row[1].strip()
            if not ap:
                raise TraceFormatError("empty ap_id", line=lineno)
            if not (math.isfinite(t) and math.isfinite(v)):
                raise TraceFormatError("non-finite value", line=lineno)
            lo, hi = RSSI_RANGE_DBM
            if not lo <= v <= hi:
                raise TraceFormatError(f"rssi {v} outside [{lo}, {hi}] dBm", line=lineno)
            per_ap[ap].append((t, v, lineno))
    if not per_ap:
        raise EmptyInputError(f"{path}: no samples")
    return align(_to_trace(ap, entries) for ap, entries in per_ap.items())


def _to_trace(ap, entries):
    # rows may arrive in any order; duplicates surface below as grid mismatches
    entries = sorted(entries, key=lambda e: (e[0], e[2]))
    times = np.array([e[0] for e in entries])
    values = np.array([e[1] for e in entries])
    if len(times) == 1:
        return RssiTrace(ap, values, DEFAULT_SAMPLE_RATE_HZ, times[0])
    period = float(np.median(np.diff(times)))
    if period <= 0:
        raise TraceFormatError(f"{ap!r}: cannot infer sample period", line=entries[1][2])
    rate = _snap_rate(1.0 / period)
    offsets = (times - times[0]) * rate
    idx = np.rint(offsets)
    bad = np.flatnonzero(np.abs(offsets - idx) > JITTER_TOLERANCE)
    if bad.size:
        raise TraceFormatError(
            f"{ap!r}: sampling jitter exceeds {JITTER_TOLERANCE:.0%} of the period", line=entries[bad[0]][2]
        )
    expected = np.arange(len(times))
    mismatch = np.flatnonzero(idx != expected)
    if mismatch.size:
        raise TraceFormatError(f"{ap!r}: missing or duplicate sample", line=entries[mismatch[0]][2])
    return RssiTrace(ap, values, rate, float(times[0]))


def _snap_rate(rate):
    # timestamps carry 4 decimals, so the median period is only approximate
    nearest = round(rate)
    if nearest > 0 and abs(rate - nearest) / nearest < 1e-3:
        return float(nearest)
    return rate
