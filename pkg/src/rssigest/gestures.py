"""Sign-string encoding of primitives and gesture-family matching.

Rising edges map to ``+``, falling edges to ``-`` and pauses to ``0``.  A
string is recognised only if it is exactly some template pattern repeated
``count`` times.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .primitives import ExtractorConfig, Kind, Magnitude, Speed, extract_primitives, flip_primitives

# window edges weaker than this fraction of the calibrated preamble drop are ignored
ACTIVITY_FRACTION = 0.25

SIGNS = {Kind.RISING: "+", Kind.FALLING: "-", Kind.PAUSE: "0"}
ALPHABET = frozenset("+-0")
UNKNOWN = "unknown"
_SWAP = str.maketrans("+-", "-+")


@dataclass(frozen=True)
class GestureTemplate:
    family_name: str
    pattern: str
    repeatable: bool = False

    def __post_init__(self):
        if not self.pattern or not set(self.pattern) <= ALPHABET:
            raise ConfigError(f"template {self.family_name!r}: pattern must be a non-empty string over '+-0'")
        if not self.family_name or self.family_name == UNKNOWN:
            raise ConfigError(f"invalid family name {self.family_name!r}")


class TemplateSet(tuple):
    """Immutable collection of templates with unique patterns and names."""

    def __new__(cls, templates):
        templates = tuple(templates)
        seen_patterns, seen_names = {}, set()
        for t in templates:
            if t.pattern in seen_patterns:
                raise ConfigError(
                    f"templates {seen_patterns[t.pattern]!r} and {t.family_name!r} share pattern {t.pattern!r}"
                )
            if t.family_name in seen_names:
                raise ConfigError(f"duplicate family name {t.family_name!r}")
            seen_patterns[t.pattern] = t.family_name
            seen_names.add(t.family_name)
        return super().__new__(cls, templates)

    def by_name(self, name):
        for t in self:
            if t.family_name == name:
                return t
        raise KeyError(name)

    @property
    def names(self):
        return [t.family_name for t in self]


def parse_templates(text, source="<templates>"):
    templates = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3):
            raise ConfigError(f"{source}:{lineno}: expected 'family_name,pattern,repeatable'")
        name, pattern = parts[0], parts[1].replace("−", "-")
        repeatable = False
        if len(parts) == 3 and parts[2]:
            flag = parts[2].lower()
            if flag not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"{source}:{lineno}: bad repeatable flag {parts[2]!r}")
            repeatable = flag in ("true", "1", "yes")
        try:
            templates.append(GestureTemplate(name, pattern, repeatable))
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return TemplateSet(templates)


def load_templates(path=None):
    """Template table from ``path``, or the packaged default table."""
    if path is None:
        text = resources.files("rssigest.data").joinpath("templates.csv").read_text()
        return parse_templates(text, "templates.csv")
    path = Path(path)
    return parse_templates(path.read_text(), str(path))


@dataclass(frozen=True)
class GestureEvent:
    family_name: str
    count: int
    frequency_hz: float
    start_s: float
    end_s: float
    primitive_string: str
    speed: Speed = Speed.NA
    magnitude: Magnitude = Magnitude.NA

    @property
    def known(self):
        return self.family_name != UNKNOWN


def swap_signs(encoded):
    return encoded.translate(_SWAP)


def encode(primitives, flip=False):
    s = "".join(SIGNS[p.kind] for p in primitives)
    return swap_signs(s) if flip else s


def decode(encoded, templates):
    """Best ``(template, count)`` decoding ``encoded`` exactly, or None.

    Prefers the larger count, then the longer pattern, then the
    lexicographically smaller family name.
    """
    best = None
    for t in templates:
        n, rem = divmod(len(encoded), len(t.pattern))
        if n == 0 or rem or (n > 1 and not t.repeatable):
            continue
        if t.pattern * n != encoded:
            continue
        key = (-n, -len(t.pattern), t.family_name)
        if best is None or key < best[0]:
            best = (key, t, n)
    return None if best is None else (best[1], best[2])


def repetition_frequency(starts):
    """Repetitions per second from the start times of each repetition."""
    if len(starts) < 2:
        return 0.0
    span = starts[-1] - starts[0]
    return float((len(starts) - 1) / span) if span > 0 else 0.0


def _dominant(values, na):
    values = [v for v in values if v is not na]
    if not values:
        return na
    counts = Counter(values)
    top = max(counts.values())
    return next(v for v in values if counts[v] == top)


def match(encoded, templates, primitives=None):
    """Match ``encoded`` against ``templates``.

    ``primitives`` (same length as the string) supply timing for the span
    and the repetition frequency.
    """
    primitives = list(primitives) if primitives is not None else []
    timed = len(primitives) == len(encoded) and primitives
    start = primitives[0].start_s if timed else 0.0
    end = primitives[-1].end_s if timed else 0.0
    edges = [p for p in primitives if p.kind.is_edge]
    speed = _dominant([p.speed for p in edges], Speed.NA)
    magnitude = _dominant([p.magnitude for p in edges], Magnitude.NA)
    found = decode(encoded, templates)
    if found is None:
        return GestureEvent(UNKNOWN, 1, 0.0, float(start), float(end), encoded, speed, magnitude)
    template, count = found
    freq = 0.0
    if timed and count > 1:
        step = len(template.pattern)
        freq = repetition_frequency([primitives[i * step].start_s for i in range(count)])
    return GestureEvent(template.family_name, count, freq, float(start), float(end), encoded, speed, magnitude)


def primitives_in_window(primitives, start_s, end_s):
    """Primitives centred in the window, without leading or trailing pauses."""
    inside = [p for p in primitives if start_s <= p.center_s <= end_s]
    while inside and inside[0].kind is Kind.PAUSE:
        inside.pop(0)
    while inside and inside[-1].kind is Kind.PAUSE:
        inside.pop()
    return inside


def window_primitives(window, trace, config=ExtractorConfig(), context_s=1.0, raw=None, lead_s=None):
    """Primitives inside ``window``, in the session's orientation.

    ``trace`` is the denoised trace and ``raw`` (optional) the trace it came
    from.  ``context_s`` extra seconds on each side help locate edges at the
    window borders; ``lead_s`` overrides the amount before the window.
    Edges weaker than a fixed fraction of the calibrated preamble drop are
    ignored, and edges are swapped when the session is flipped.
    """
    calib = window.calibration
    floor = max(config.min_edge_db, ACTIVITY_FRACTION * calib.preamble_drop_db)
    config = replace(config, min_edge_db=floor)
    t0 = window.start_s - (context_s if lead_s is None else lead_s)
    t1 = window.end_s + context_s
    sub = trace.slice_time(t0, t1)
    ref = raw.slice_time(t0, t1) if raw is not None else None
    prims = extract_primitives(sub, config, calibration=calib, reference=ref)
    prims = primitives_in_window(prims, window.start_s, window.end_s)
    return flip_primitives(prims) if calib.polarity_flipped else prims


def classify_window(window, trace, templates=None, config=ExtractorConfig(), context_s=1.0, raw=None):
    """Extract, encode and match the primitives inside one gesture window."""
    templates = load_templates() if templates is None else templates
    prims = window_primitives(window, trace, config, context_s, raw)
    return match(encode(prims), templates, prims)
