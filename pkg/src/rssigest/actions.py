"""Gesture-to-action rules.

Rule file lines read ``family,count_predicate,action,passthrough`` where the
predicate is ``exact(n)``, ``at_least(n)`` or ``any`` and passthrough is a
``;``-separated subset of ``count``, ``frequency``, ``speed``,
``magnitude``.  A table in which two rules could fire for the same
(family, count) is rejected when loaded.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError

ATTRIBUTES = ("count", "frequency", "speed", "magnitude")
_PRED = re.compile(r"^(exact|at_least)\((\d+)\)$|^any$")


@dataclass(frozen=True)
class CountPredicate:
    kind: str  # exact | at_least | any
    n: int = 1

    def __post_init__(self):
        if self.kind not in ("exact", "at_least", "any"):
            raise ConfigError(f"unknown count predicate {self.kind!r}")
        if self.kind != "any" and self.n < 1:
            raise ConfigError("count predicate needs n >= 1")

    def __call__(self, count):
        if self.kind == "exact":
            return count == self.n
        if self.kind == "at_least":
            return count >= self.n
        return True

    def overlaps(self, other):
        """True if some count >= 1 satisfies both predicates."""
        lo_a, hi_a = self._range()
        lo_b, hi_b = other._range()
        return max(lo_a, lo_b) <= min(hi_a, hi_b)

    def _range(self):
        if self.kind == "exact":
            return self.n, self.n
        if self.kind == "at_least":
            return self.n, float("inf")
        return 1, float("inf")

    def __str__(self):
        return "any" if self.kind == "any" else f"{self.kind}({self.n})"

    @classmethod
    def parse(cls, text):
        m = _PRED.match(text.strip().replace(" ", ""))
        if not m:
            raise ConfigError(f"bad count predicate {text!r}")
        return cls("any") if m.group(1) is None else cls(m.group(1), int(m.group(2)))


def exact(n):
    return CountPredicate("exact", n)


def at_least(n):
    return CountPredicate("at_least", n)


ANY = CountPredicate("any")


@dataclass(frozen=True)
class ActionRule:
    family_name: str
    count_predicate: CountPredicate
    action_name: str
    passthrough: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "passthrough", frozenset(self.passthrough))
        bad = self.passthrough - set(ATTRIBUTES)
        if bad:
            raise ConfigError(f"unknown passthrough attribute(s): {', '.join(sorted(bad))}")
        if not self.family_name or not self.action_name:
            raise ConfigError("rules need a family and an action")

    def fires(self, gesture):
        return gesture.family_name == self.family_name and self.count_predicate(gesture.count)


@dataclass(frozen=True)
class ActionEvent:
    action_name: str
    family_name: str
    start_s: float
    end_s: float
    attributes: dict = field(default_factory=dict, compare=False)


class RuleSet(tuple):
    """Validated rule table: at most one rule fires per (family, count)."""

    def __new__(cls, rules):
        rules = tuple(rules)
        for i, a in enumerate(rules):
            for b in rules[i + 1 :]:
                if a.family_name == b.family_name and a.count_predicate.overlaps(b.count_predicate):
                    raise ConfigError(
                        f"rules {a.action_name!r} ({a.count_predicate}) and {b.action_name!r} "
                        f"({b.count_predicate}) both fire for {a.family_name}"
                    )
        return super().__new__(cls, rules)


def parse_rules(text, source="<rules>"):
    rules = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (3, 4):
            raise ConfigError(f"{source}:{lineno}: expected 'family,count_predicate,action,passthrough'")
        passthrough = {p.strip() for p in (parts[3] if len(parts) == 4 else "").split(";") if p.strip()}
        try:
            rules.append(ActionRule(parts[0], CountPredicate.parse(parts[1]), parts[2], passthrough))
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    try:
        return RuleSet(rules)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_rules(path=None):
    """Rule table from ``path``, or the packaged media-player defaults."""
    if path is None:
        text = resources.files("rssigest.data").joinpath("actions.csv").read_text()
        return parse_rules(text, "actions.csv")
    path = Path(path)
    return parse_rules(path.read_text(), str(path))


def map_action(gesture, rules):
    """ActionEvent for ``gesture`` or None when no rule fires."""
    if not gesture.known:
        return None
    for rule in rules:
        if rule.fires(gesture):
            values = {
                "count": gesture.count,
                "frequency": gesture.frequency_hz,
                "speed": gesture.speed.value,
                "magnitude": gesture.magnitude.value,
            }
            attrs = {k: values[k] for k in ATTRIBUTES if k in rule.passthrough}
            return ActionEvent(rule.action_name, gesture.family_name, gesture.start_s, gesture.end_s, attrs)
    return None
