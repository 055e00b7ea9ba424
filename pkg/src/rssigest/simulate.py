"""Synthetic multi-AP RSSI traces with ground-truth labels.

Every edge is a normalised logistic ramp.  Its duration is the midpoint of
its speed class, and its size is a fraction of the AP's |baseline| dBm
(stronger links move more).  A pause is a hold.  Each AP sees the same
scripted hand motion scaled by its own gain in [0.6, 1.0], plus independent
Gaussian noise and independent interference.

Scenario files are plain text::

    # comment
    sample_rate_hz = 50
    duration_s = 20
    baselines_dbm = -40, -48, -55
    noise_sigma_db = 1.0
    seed = 7
    [events]
    preamble start=1.0 drop=8 updowns=2
    gesture start=8 family=Up-Down count=2 speed=high magnitude=high
    interference start=14 duration=3 amplitude=4 shape=randomwalk
"""
from __future__ import annotations

import json
import shlex
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError
from .gestures import load_templates
from .primitives import Magnitude, Speed
from .trace import RSSI_RANGE_DBM, RssiTrace, TraceBundle

SPEED_DURATION_S = {Speed.HIGH: 0.5, Speed.MEDIUM: 1.1, Speed.LOW: 2.0}
MAGNITUDE_FRACTION = {Magnitude.HIGH: 0.15, Magnitude.LOW: 0.07}
PREAMBLE_DROP_FRACTION = 0.2  # largest value keeping High gestures above 0.7 x drop
PREAMBLE_HOLD_S = 0.5
EDGE_GAP_S = 0.2
PAUSE_HOLD_S = 1.0
LOGISTIC_STEEPNESS = 5.0
GAIN_RANGE = (0.6, 1.0)
HUMANLIKE_SCALE = 0.5
_NET_ZERO_FAMILIES = ("Up-Down", "Down-Up", "Up-Pause-Down", "Down-Pause-Up", "Infinity")


def _speed(value):
    return value if isinstance(value, Speed) else Speed(str(value).lower())


def _magnitude(value):
    return value if isinstance(value, Magnitude) else Magnitude(str(value).lower())


@dataclass(frozen=True)
class Preamble:
    start_s: float
    drop_db: float | None = None  # default: PREAMBLE_DROP_FRACTION * |baseline|
    updown_count: int = 2

    def __post_init__(self):
        if self.updown_count < 1:
            raise ConfigError("preamble needs at least one up-down")
        if self.drop_db is not None and self.drop_db <= 0:
            raise ConfigError("preamble drop must be positive")


@dataclass(frozen=True)
class Gesture:
    family: str
    start_s: float
    count: int = 1
    speed: Speed = Speed.HIGH
    magnitude: Magnitude = Magnitude.HIGH

    def __post_init__(self):
        object.__setattr__(self, "speed", _speed(self.speed))
        object.__setattr__(self, "magnitude", _magnitude(self.magnitude))
        if self.speed is Speed.NA or self.magnitude is Magnitude.NA:
            raise ConfigError("gesture speed and magnitude must be concrete classes")
        if self.count < 1:
            raise ConfigError("gesture count must be >= 1")


@dataclass(frozen=True)
class InterferenceBurst:
    start_s: float
    duration_s: float
    amplitude_db: float
    shape: str = "randomwalk"  # or "humanlike"

    def __post_init__(self):
        if self.shape not in ("randomwalk", "humanlike"):
            raise ConfigError(f"unknown interference shape {self.shape!r}")
        if self.duration_s <= 0 or self.amplitude_db < 0:
            raise ConfigError("interference needs positive duration and non-negative amplitude")


@dataclass(frozen=True)
class Span:
    kind: str  # preamble | gesture | primitive | interference
    label: str
    start_s: float
    end_s: float
    attrs: dict = field(default_factory=dict, compare=False)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line):
        return cls(**json.loads(line))


@dataclass(frozen=True)
class GroundTruth:
    spans: tuple = ()

    def of_kind(self, kind):
        return [s for s in self.spans if s.kind == kind]

    @property
    def gestures(self):
        return self.of_kind("gesture")

    @property
    def primitives(self):
        return self.of_kind("primitive")

    @property
    def preambles(self):
        return self.of_kind("preamble")

    def save(self, path):
        Path(path).write_text("".join(s.to_json() + "\n" for s in self.spans))

    @classmethod
    def load(cls, path):
        lines = Path(path).read_text().splitlines()
        return cls(tuple(Span.from_json(line) for line in lines if line.strip()))


@dataclass(frozen=True)
class ScenarioScript:
    duration_s: float
    baselines_dbm: tuple = (-40.0,)
    noise_sigma_db: float | tuple = 0.0
    events: tuple = ()
    seed: int = 0
    sample_rate_hz: float = 50.0
    ap_ids: tuple | None = None
    gains: tuple | None = None
    flipped_aps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "baselines_dbm", tuple(float(b) for b in np.atleast_1d(self.baselines_dbm)))
        object.__setattr__(self, "events", tuple(self.events))
        n = len(self.baselines_dbm)
        if n == 0:
            raise ConfigError("scenario needs at least one AP")
        if self.ap_ids is not None and len(self.ap_ids) != n:
            raise ConfigError("ap_ids must match baselines_dbm")
        if self.gains is not None and len(self.gains) != n:
            raise ConfigError("gains must match baselines_dbm")
        sig = np.atleast_1d(self.noise_sigma_db)
        if sig.size not in (1, n) or np.any(sig < 0):
            raise ConfigError("noise_sigma_db must be >= 0, one value or one per AP")
        if self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise ConfigError("sample rate and duration must be positive")

    @property
    def n_aps(self):
        return len(self.baselines_dbm)

    @property
    def ids(self):
        return tuple(self.ap_ids) if self.ap_ids else tuple(f"AP{i + 1}" for i in range(self.n_aps))

    def sigmas(self):
        return np.broadcast_to(np.atleast_1d(np.asarray(self.noise_sigma_db, dtype=float)), (self.n_aps,))


# ---------------------------------------------------------------------------
# waveform primitives


def logistic_ramp(u, steepness=LOGISTIC_STEEPNESS):
    """Logistic step rescaled to run exactly from 0 at u=0 to 1 at u=1."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    lo = 1.0 / (1.0 + np.exp(steepness / 2))
    hi = 1.0 - lo
    r = (1.0 / (1.0 + np.exp(-steepness * (u - 0.5))) - lo) / (hi - lo)
    return np.clip(r, 0.0, 1.0)  # rounding can overshoot by an ulp


@dataclass(frozen=True)
class _Edge:
    sign: int
    start_s: float
    duration_s: float
    fraction: float | None  # of |baseline|
    absolute_db: float | None = None

    def amplitude(self, baseline):
        return self.absolute_db if self.absolute_db is not None else self.fraction * abs(baseline)


def _render(edges, t, baseline, gain=1.0):
    out = np.zeros_like(t)
    for e in edges:
        out += e.sign * gain * e.amplitude(baseline) * logistic_ramp((t - e.start_s) / e.duration_s)
    return out


def _pattern_schedule(pattern, start_s, duration_s, fraction, absolute_db=None):
    """Edges and primitive spans for a sign string starting at ``start_s``."""
    edges, prims = [], []
    t = start_s
    prev = None
    for ch in pattern:
        if ch == "0":
            prims.append(("pause", t, t + PAUSE_HOLD_S))
            t += PAUSE_HOLD_S
            prev = "0"
            continue
        if prev in ("+", "-"):
            t += EDGE_GAP_S
        sign = 1 if ch == "+" else -1
        edges.append(_Edge(sign, t, duration_s, fraction, absolute_db))
        prims.append(("rising" if sign > 0 else "falling", t, t + duration_s))
        t += duration_s
        prev = ch
    return edges, prims, t


def _gesture_schedule(g, templates):
    try:
        template = templates.by_name(g.family)
    except KeyError:
        raise DomainError(f"unknown gesture family {g.family!r}") from None
    pattern = template.pattern * g.count
    edges, prims, end = _pattern_schedule(
        pattern, g.start_s, SPEED_DURATION_S[g.speed], MAGNITUDE_FRACTION[g.magnitude]
    )
    step = len(template.pattern)
    rep_starts = [prims[i * step][1] for i in range(g.count)]
    freq = (g.count - 1) / (rep_starts[-1] - rep_starts[0]) if g.count > 1 else 0.0
    attrs = {
        "family": g.family,
        "count": g.count,
        "speed": g.speed.value,
        "magnitude": g.magnitude.value,
        "pattern": pattern,
        "repetition_starts": rep_starts,
        "frequency_hz": freq,
    }
    return edges, prims, Span("gesture", g.family, g.start_s, end, attrs)


def _preamble_schedule(p):
    d = SPEED_DURATION_S[Speed.HIGH]
    frac = None if p.drop_db is not None else PREAMBLE_DROP_FRACTION
    edges = [_Edge(-1, p.start_s, d, frac, p.drop_db)]
    t = p.start_s + d + PREAMBLE_HOLD_S
    pattern = "+-" * p.updown_count + "+"
    more, _, end = _pattern_schedule(pattern, t, d, frac, p.drop_db)
    edges.extend(more)
    attrs = {"updown_count": p.updown_count, "drop_db": p.drop_db, "motion_end_s": more[-2].start_s + d}
    return edges, Span("preamble", "preamble", p.start_s, end, attrs)


def gesture_span(gesture, templates=None):
    """Ground-truth span a scripted gesture will occupy."""
    templates = load_templates() if templates is None else templates
    return _gesture_schedule(gesture, templates)[2]


def _event_span(event, templates):
    if isinstance(event, Preamble):
        return _preamble_schedule(event)[1]
    if isinstance(event, Gesture):
        return _gesture_schedule(event, templates)[2]
    return Span("interference", event.shape, event.start_s, event.start_s + event.duration_s)


def synth_gesture_waveform(family, count=1, speed=Speed.HIGH, magnitude=Magnitude.HIGH, baseline_db=-40.0,
                           sample_rate_hz=50.0, lead_s=0.0, tail_s=0.0, templates=None):
    """Noise-free RSSI of one gesture, starting ``lead_s`` into the vector.

    Returns ``(samples, GroundTruth)``; samples are absolute dBm, starting
    at ``baseline_db``.
    """
    templates = load_templates() if templates is None else templates
    g = Gesture(family, lead_s, count, speed, magnitude)
    edges, prims, span = _gesture_schedule(g, templates)
    n = int(round((span.end_s + tail_s) * sample_rate_hz)) + 1
    t = np.arange(n) / sample_rate_hz
    wave = baseline_db + _render(edges, t, baseline_db)
    truth = GroundTruth((span,) + tuple(Span("primitive", k, a, b, {"gesture": family}) for k, a, b in prims))
    return wave, truth


def _randomwalk(rng, n, amplitude):
    if n < 2 or amplitude == 0:
        return np.zeros(n)
    steps = rng.standard_normal(n)
    walk = np.cumsum(steps)
    walk -= np.linspace(walk[0], walk[-1], n)
    peak = np.max(np.abs(walk))
    if peak > 0:
        walk *= amplitude / peak
    # taper so the burst starts and ends at zero
    taper = np.ones(n)
    k = max(1, n // 10)
    ramp = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, k))
    taper[:k] = ramp
    taper[-k:] = ramp[::-1]
    return walk * taper


def _humanlike(rng, t, burst, templates, baseline):
    family = _NET_ZERO_FAMILIES[rng.integers(len(_NET_ZERO_FAMILIES))]
    speed = (Speed.HIGH, Speed.MEDIUM, Speed.LOW)[rng.integers(3)]
    g = Gesture(family, burst.start_s, 1, speed, Magnitude.HIGH)
    edges, _, _ = _gesture_schedule(g, templates)
    edges = [replace(e, fraction=None, absolute_db=burst.amplitude_db * HUMANLIKE_SCALE) for e in edges]
    wave = _render(edges, t, baseline)
    wave[t >= burst.start_s + burst.duration_s] = 0.0
    return wave


def validate(script, templates=None):
    templates = load_templates() if templates is None else templates
    spans = sorted((_event_span(e, templates) for e in script.events), key=lambda s: s.start_s)
    for a, b in zip(spans, spans[1:]):
        if b.start_s < a.end_s:
            raise ConfigError(f"scripted events overlap: {a.label} [{a.start_s}, {a.end_s}] and {b.label} at {b.start_s}")
    for s in spans:
        if s.start_s < 0:
            raise ConfigError(f"{s.label} starts before 0 s")
    return spans


def generate_scenario(script, templates=None):
    """Render ``script`` into a :class:`TraceBundle` plus ground truth."""
    templates = load_templates() if templates is None else templates
    validate(script, templates)
    rate = script.sample_rate_hz
    n = int(round(script.duration_s * rate))
    t = np.arange(n) / rate
    rng = np.random.default_rng(script.seed)
    gains = np.asarray(script.gains if script.gains is not None else rng.uniform(*GAIN_RANGE, script.n_aps))

    motion_edges, spans = [], []
    for ev in script.events:
        if isinstance(ev, Preamble):
            edges, span = _preamble_schedule(ev)
            motion_edges.extend(edges)
            spans.append(span)
        elif isinstance(ev, Gesture):
            edges, prims, span = _gesture_schedule(ev, templates)
            motion_edges.extend(edges)
            spans.append(span)
            spans.extend(Span("primitive", k, a, b, {"gesture": ev.family}) for k, a, b in prims)
        else:
            spans.append(_event_span(ev, templates))

    bursts = [e for e in script.events if isinstance(e, InterferenceBurst)]
    sigmas = script.sigmas()
    flipped = set(script.flipped_aps)
    traces = []
    for i, (ap, base) in enumerate(zip(script.ids, script.baselines_dbm)):
        # fixed draw order keeps noise realisations identical across sigma sweeps
        z = rng.standard_normal(n)
        polarity = -1.0 if ap in flipped else 1.0
        x = base + polarity * _render(motion_edges, t, base, gains[i])
        for b in bursts:
            if b.shape == "randomwalk":
                i0, i1 = np.searchsorted(t, [b.start_s, b.start_s + b.duration_s])
                x[i0:i1] += _randomwalk(rng, i1 - i0, b.amplitude_db * rng.uniform(*GAIN_RANGE))
            else:
                x += _humanlike(rng, t, b, templates, base) * rng.uniform(*GAIN_RANGE)
        x += sigmas[i] * z
        traces.append(RssiTrace(ap, np.clip(x, *RSSI_RANGE_DBM), rate, 0.0))
    spans.sort(key=lambda s: (s.start_s, s.kind != "gesture"))
    return TraceBundle(tuple(traces)), GroundTruth(tuple(spans))


def snr_sweep(script, sigma_list, templates=None):
    """Regenerate ``script`` at each noise level with the same seed."""
    return [
        (float(s), *generate_scenario(replace(script, noise_sigma_db=float(s)), templates)) for s in sigma_list
    ]


# ---------------------------------------------------------------------------
# scenario files

_SCALAR_KEYS = {"sample_rate_hz": float, "duration_s": float, "seed": int}
_LIST_KEYS = ("baselines_dbm", "gains")


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def parse_scenario(text, source="<scenario>"):
    header, events = {}, []
    in_events = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.lower() == "[events]":
            in_events = True
            continue
        try:
            if in_events:
                events.append(_parse_event(line))
            else:
                key, sep, value = (p.strip() for p in line.partition("="))
                if not sep:
                    raise ConfigError("expected 'key = value'")
                header[key] = value
        except (ConfigError, ValueError, KeyError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    kwargs = {}
    try:
        for key, value in header.items():
            if key in _SCALAR_KEYS:
                kwargs[key] = _SCALAR_KEYS[key](value)
            elif key in _LIST_KEYS:
                kwargs[key] = _floats(value)
            elif key == "noise_sigma_db":
                vals = _floats(value)
                kwargs[key] = vals[0] if len(vals) == 1 else vals
            elif key == "ap_ids":
                kwargs[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key == "flipped_aps":
                kwargs[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            else:
                raise ConfigError(f"unknown key {key!r}")
        if "duration_s" not in kwargs:
            raise ConfigError("duration_s is required")
        return ScenarioScript(events=tuple(events), **kwargs)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _parse_event(line):
    words = shlex.split(line)
    kind, opts = words[0].lower(), dict(w.split("=", 1) for w in words[1:])
    if kind == "preamble":
        drop = opts.pop("drop", None)
        ev = Preamble(float(opts.pop("start")), float(drop) if drop else None, int(opts.pop("updowns", 2)))
    elif kind == "gesture":
        ev = Gesture(
            opts.pop("family"),
            float(opts.pop("start")),
            int(opts.pop("count", 1)),
            opts.pop("speed", "high"),
            opts.pop("magnitude", "high"),
        )
    elif kind == "interference":
        ev = InterferenceBurst(
            float(opts.pop("start")),
            float(opts.pop("duration")),
            float(opts.pop("amplitude")),
            opts.pop("shape", "randomwalk"),
        )
    else:
        raise ConfigError(f"unknown event type {kind!r}")
    if opts:
        raise ConfigError(f"unknown {kind} options: {', '.join(sorted(opts))}")
    return ev


def load_scenario(path):
    path = Path(path)
    return parse_scenario(path.read_text(), str(path))


def format_scenario(script):
    lines = [
        f"sample_rate_hz = {script.sample_rate_hz:g}",
        f"duration_s = {script.duration_s:g}",
        "baselines_dbm = " + ", ".join(f"{b:g}" for b in script.baselines_dbm),
        "noise_sigma_db = " + ", ".join(f"{s:g}" for s in np.atleast_1d(script.noise_sigma_db)),
        f"seed = {script.seed}",
    ]
    if script.ap_ids:
        lines.append("ap_ids = " + ", ".join(script.ap_ids))
    if script.gains is not None:
        lines.append("gains = " + ", ".join(f"{g:g}" for g in script.gains))
    if script.flipped_aps:
        lines.append("flipped_aps = " + ", ".join(str(a) for a in script.flipped_aps))
    lines.append("[events]")
    for ev in script.events:
        if isinstance(ev, Preamble):
            drop = f" drop={ev.drop_db:g}" if ev.drop_db is not None else ""
            lines.append(f"preamble start={ev.start_s:g}{drop} updowns={ev.updown_count}")
        elif isinstance(ev, Gesture):
            lines.append(
                f"gesture start={ev.start_s:g} family={ev.family} count={ev.count} "
                f"speed={ev.speed.value} magnitude={ev.magnitude.value}"
            )
        else:
            lines.append(
                f"interference start={ev.start_s:g} duration={ev.duration_s:g} "
                f"amplitude={ev.amplitude_db:g} shape={ev.shape}"
            )
    return "\n".join(lines) + "\n"


def save_scenario(script, path):
    Path(path).write_text(format_scenario(script))
