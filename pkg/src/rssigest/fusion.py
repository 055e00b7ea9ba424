"""Majority-vote fusion of per-AP decisions.

The plurality decision wins; a tie goes to the tied camp containing the AP
with the highest mean RSSI.  Decisions can be anything hashable: primitive
kinds, sign strings or family names.

For event streams, events from different APs are first grouped when their
spans overlap by at least half of the shorter one.  Every AP casts one vote
per group, and an AP that saw nothing there votes for ``ABSENT``, so a lone
detection among three APs is dropped.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .errors import DomainError

ABSENT = None
MIN_OVERLAP = 0.5


@dataclass(frozen=True)
class ApDecision:
    ap_id: str
    mean_rssi_dbm: float
    decision: object
    span: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not math.isfinite(self.mean_rssi_dbm):
            raise ValueError("mean_rssi_dbm must be finite")


def fuse(decisions):
    """Plurality winner with the strongest-AP tie-break."""
    decisions = list(decisions)
    if not decisions:
        raise DomainError("cannot fuse an empty decision list")
    tally = Counter(d.decision for d in decisions)
    top = max(tally.values())
    tied = {k for k, v in tally.items() if v == top}
    if len(tied) == 1:
        return next(iter(tied))
    # order-independent: strongest AP first, then ap_id
    best = min((d for d in decisions if d.decision in tied), key=lambda d: (-d.mean_rssi_dbm, str(d.ap_id)))
    return best.decision


def _overlap_fraction(a, b):
    inter = min(a.end_s, b.end_s) - max(a.start_s, b.start_s)
    shorter = min(a.end_s - a.start_s, b.end_s - b.start_s)
    return inter / shorter if shorter > 0 else 0.0


def associate(events_by_ap):
    """Group events of different APs that describe the same motion.

    ``events_by_ap`` maps ap_id to a time-ordered event list.  Returns a
    list of groups, each a dict ap_id -> event, ordered by time.
    """
    items = sorted(
        ((e.start_s, str(ap), i, ap, e) for ap, evs in events_by_ap.items() for i, e in enumerate(evs)),
        key=lambda r: r[:3],
    )
    groups = []
    for *_, ap, e in items:
        home = None
        best = MIN_OVERLAP
        for g in groups[-8:]:
            if ap in g:
                continue
            frac = max(_overlap_fraction(e, other) for other in g.values())
            if frac >= best:
                home, best = g, frac
        if home is None:
            groups.append({ap: e})
        else:
            home[ap] = e
    groups.sort(key=lambda g: min(e.start_s for e in g.values()))
    return groups


def fuse_events(events_by_ap, mean_rssi, key=lambda e: e.kind, combine=None):
    """Fused event list: one vote per AP per group, absence included.

    ``combine(winners, rep)``, if given, builds the output event from all
    winning events of a group and their representative.

    Returns the winning events.  A group is represented by the winning
    event that agrees best in time with the other winning events, with the
    strongest AP breaking ties, so one badly measured span cannot swallow
    its neighbours.
    """
    aps = list(events_by_ap)
    out = []
    for g in associate(events_by_ap):
        votes = [ApDecision(ap, mean_rssi[ap], key(g[ap]) if ap in g else ABSENT) for ap in aps]
        winner = fuse(votes)
        if winner is ABSENT:
            continue
        voters = [ap for ap in aps if ap in g and key(g[ap]) == winner]
        rep = max(voters, key=lambda ap: (_agreement(g[ap], [g[o] for o in voters if o != ap]), mean_rssi[ap], str(ap)))
        out.append(g[rep] if combine is None else combine([g[ap] for ap in voters], g[rep]))
    out.sort(key=lambda e: e.start_s)
    return _drop_overlaps(out)


def _agreement(e, others):
    # rounded so float noise cannot override the RSSI tie-break
    return round(sum(_iou(e, o) for o in others), 9)


def _iou(a, b):
    inter = min(a.end_s, b.end_s) - max(a.start_s, b.start_s)
    union = max(a.end_s, b.end_s) - min(a.start_s, b.start_s)
    return max(inter, 0.0) / union if union > 0 else 0.0


def _drop_overlaps(events):
    kept = []
    for e in events:
        if kept and _overlap_fraction(kept[-1], e) >= MIN_OVERLAP:
            continue
        kept.append(e)
    return kept
