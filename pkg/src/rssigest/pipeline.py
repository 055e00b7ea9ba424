"""End-to-end recognition over a multi-AP bundle.

denoise every AP -> find preambles on the strongest AP -> calibrate every
AP at that preamble -> open a gesture window -> extract primitives per AP ->
fuse by majority vote -> encode and match -> map to an action.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .actions import load_rules, map_action
from .denoise import DenoiseConfig, denoise_signal
from .errors import EmptyInputError, RssiGestError, StageError
from .fusion import ApDecision, fuse, fuse_events
from .gestures import encode, load_templates, match, window_primitives
from .primitives import ExtractorConfig, detect_pauses, interior_pauses, speed_class
from .segment import GestureWindow, SegmenterConfig, activity_edges, calibrate_at, next_preamble, window_from_edges
from .wavelet import haar_detail_dense, max_level

CONTEXT_S = 1.0  # samples kept around a window for edge detection


@dataclass(frozen=True)
class PipelineConfig:
    denoise: DenoiseConfig = DenoiseConfig()
    extractor: ExtractorConfig = ExtractorConfig()
    segmenter: SegmenterConfig = SegmenterConfig()
    fusion: str = "primitive"  # or "gesture"

    def __post_init__(self):
        if self.fusion not in ("primitive", "gesture"):
            raise ValueError(f"unknown fusion granularity {self.fusion!r}")


@dataclass
class Session:
    preamble_start_s: float
    preamble_end_s: float
    reference_ap: str
    calibrations: dict
    window: GestureWindow | None = None
    primitives: dict = field(default_factory=dict)
    fused: list = field(default_factory=list)
    gesture: object = None
    action: object = None


@dataclass
class PipelineResult:
    actions: list
    gestures: list
    sessions: list
    denoised: dict = field(default_factory=dict)
    noise_sigma: dict = field(default_factory=dict)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (RssiGestError, ValueError) as exc:
        raise StageError(name, exc) from exc


def denoise_bundle(bundle, config=DenoiseConfig()):
    """Denoised traces and raw-noise estimates, keyed by ap_id."""
    clean, sigma = {}, {}
    for tr in bundle:
        levels = min(config.levels, max_level(len(tr)))
        if levels < 1:
            raise EmptyInputError(f"trace {tr.ap_id!r} is too short to denoise")
        x, s = denoise_signal(tr.samples, replace(config, levels=levels), return_sigma=True)
        clean[tr.ap_id] = tr.with_samples(x)
        sigma[tr.ap_id] = s
    return clean, sigma


def run_pipeline(bundle, config=PipelineConfig(), templates=None, rules=None):
    """Recognise every preamble-gated gesture in ``bundle``."""
    if len(bundle) == 0:
        raise StageError("input", EmptyInputError("bundle has no traces"))
    templates = load_templates() if templates is None else templates
    rules = load_rules() if rules is None else rules
    clean, sigma = _stage("denoise", denoise_bundle, bundle, config.denoise)
    mean_rssi = bundle.mean_rssi
    ref = bundle.strongest()
    seg_cfg = config.segmenter
    sessions = []
    pos = None
    while True:
        det = _stage("segment", next_preamble, ref, seg_cfg, pos)
        if det is None:
            break
        calibs = {ref.ap_id: det.calibration}
        for tr in bundle:
            if tr.ap_id != ref.ap_id:
                c = _stage("segment", calibrate_at, tr, det, seg_cfg)
                if c is not None:
                    calibs[tr.ap_id] = c
        session = Session(det.start_s, det.end_s, ref.ap_id, calibs)
        sessions.append(session)
        # every calibrated AP contributes activity, so one AP's fade cannot end the window early
        edges = []
        for ap, calib in calibs.items():
            ext = replace(config.extractor, noise_sigma=sigma[ap])
            edges += _stage("segment", activity_edges, bundle[ap], det.end_s, calib, seg_cfg, ext, clean[ap])
        end_time = min(tr.end_time_s for tr in bundle)
        windows = window_from_edges(edges, det.end_s, det.calibration, seg_cfg, end_time)
        if not windows:
            pos = det.end_s + seg_cfg.silence_timeout_s
            continue
        window = windows[0]
        session.window = window
        _classify_session(session, bundle, clean, sigma, mean_rssi, config, templates)
        session.action = map_action(session.gesture, rules)
        pos = window.end_s
    gestures = [s.gesture for s in sessions if s.gesture is not None]
    actions = [s.action for s in sessions if s.action is not None]
    return PipelineResult(actions, gestures, sessions, clean, sigma)


def _classify_session(session, bundle, clean, sigma, mean_rssi, config, templates):
    window = session.window
    # context before the window must not reach back into the preamble
    lead = min(CONTEXT_S, max(0.0, window.start_s - session.preamble_end_s))
    for ap, calib in session.calibrations.items():
        ext = replace(config.extractor, noise_sigma=sigma[ap])
        w = GestureWindow(window.start_s, window.end_s, calib)
        session.primitives[ap] = _stage(
            "extract", window_primitives, w, clean[ap], ext, CONTEXT_S, bundle[ap], lead
        )
    if config.fusion == "primitive":
        fused = _stage("fuse", _fuse_primitives, session, clean, mean_rssi, config.extractor)
        session.fused = fused
        session.gesture = match(encode(fused), templates, fused)
        return
    # gesture granularity: every AP decodes on its own, then vote on (family, count)
    per_ap = {ap: match(encode(p), templates, p) for ap, p in session.primitives.items()}
    votes = [ApDecision(ap, mean_rssi[ap], (g.family_name, g.count)) for ap, g in per_ap.items()]
    winner = fuse(votes)
    best = max((ap for ap, g in per_ap.items() if (g.family_name, g.count) == winner), key=lambda a: mean_rssi[a])
    session.fused = session.primitives[best]
    session.gesture = per_ap[best]


def _consensus_edge(winners, rep):
    """``rep`` with the median span and amplitude of all agreeing APs."""
    if len(winners) == 1:
        return rep
    start = float(np.median([e.start_s for e in winners]))
    end = float(np.median([e.end_s for e in winners]))
    if not end > start:
        return rep
    amp = float(np.median([e.amplitude_db for e in winners]))
    return replace(rep, start_s=start, end_s=end, amplitude_db=amp, speed=speed_class(end - start))


def _fuse_primitives(session, clean, mean_rssi, extractor):
    """Vote on edges first, then on pauses measured against the fused edges.

    Edge spans from a single noisy AP scatter widely; the median over the
    agreeing APs is steadier, and the gaps between edges are what decide
    whether a flat stretch counts as a pause.
    """
    edges_by_ap = {ap: [p for p in prims if p.kind.is_edge] for ap, prims in session.primitives.items()}
    edges = fuse_events(edges_by_ap, mean_rssi, combine=_consensus_edge)
    if not edges:
        return []
    window = session.window
    pauses_by_ap = {}
    for ap in session.primitives:
        sub = clean[ap].slice_time(window.start_s, window.end_s)
        runs = detect_pauses(sub, extractor) if len(sub) else []
        pauses_by_ap[ap] = interior_pauses(runs, edges, extractor)
    pauses = fuse_events(pauses_by_ap, mean_rssi)
    return sorted(edges + pauses, key=lambda e: e.start_s)


def stage_dumps(result, bundle, level=None):
    """Intermediate artefacts per AP as plain arrays and strings.

    Returns ``{ap_id: {"raw": ..., "denoised": ..., "detail": ..., "level": ...,
    "sessions": [...]}}`` for writing to disk.
    """
    out = {}
    for tr in bundle:
        clean = result.denoised[tr.ap_id]
        lv = level or ExtractorConfig().analysis_level
        out[tr.ap_id] = {
            "time_s": tr.times,
            "raw": tr.samples,
            "denoised": clean.samples,
            "level": lv,
            "detail": haar_detail_dense(clean.samples, lv) if len(clean) else np.empty(0),
            "noise_sigma": result.noise_sigma[tr.ap_id],
        }
    for k, s in enumerate(result.sessions):
        for ap, prims in s.primitives.items():
            out[ap].setdefault("sessions", []).append(
                {
                    "session": k,
                    "window": None if s.window is None else (s.window.start_s, s.window.end_s),
                    "encoded": encode(prims),
                    "primitives": prims,
                }
            )
    return out
