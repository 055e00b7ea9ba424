import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rssigest.actions import ANY, ActionRule, CountPredicate, RuleSet, at_least, exact, load_rules, map_action, parse_rules
from rssigest.errors import ConfigError
from rssigest.gestures import UNKNOWN, GestureEvent
from rssigest.primitives import Magnitude, Speed

RULES = load_rules()


def _g(family, count=1, freq=0.0):
    return GestureEvent(family, count, freq, 1.0, 2.0, "", Speed.HIGH, Magnitude.HIGH)


def test_single_up_down_plays():
    """[TRIVIAL]"""
    a = map_action(_g("Up-Down"), RULES)
    assert a.action_name == "play" and a.attributes == {}


def test_repeated_up_down_fast_forwards_with_count():
    """[TRIVIAL] count and frequency pass through."""
    a = map_action(_g("Up-Down", 3, 1.2), RULES)
    assert a.action_name == "fast-forward"
    assert a.attributes == {"count": 3, "frequency": 1.2}


def test_volume_passes_speed_and_magnitude():
    """[TRIVIAL]"""
    a = map_action(_g("Up"), RULES)
    assert a.action_name == "volume-up" and a.attributes == {"speed": "high", "magnitude": "high"}


def test_unknown_and_unmapped():
    """[TRIVIAL] unknown gestures and unmatched counts produce no action."""
    assert map_action(_g(UNKNOWN), RULES) is None
    assert map_action(_g("Down-Up", 1), RULES) is None
    assert map_action(_g("NoSuchFamily"), RULES) is None


def test_predicates():
    """[TRIVIAL]"""
    assert exact(2)(2) and not exact(2)(3)
    assert at_least(2)(5) and not at_least(2)(1)
    assert ANY(1) and ANY(100)
    assert CountPredicate.parse("at_least( 3 )") == at_least(3)
    assert CountPredicate.parse("any") == ANY


_preds = st.one_of(
    st.just(ANY), st.integers(1, 12).map(exact), st.integers(1, 12).map(at_least)
)


@settings(max_examples=1000)
@given(_preds, _preds)
def test_ambiguous_rules_rejected(p, q):
    """[DERIVED] a table is accepted iff no count in 1..50 satisfies both predicates."""
    both = any(p(c) and q(c) for c in range(1, 51))
    rules = [ActionRule("X", p, "a"), ActionRule("X", q, "b")]
    if both:
        with pytest.raises(ConfigError):
            RuleSet(rules)
    else:
        assert len(RuleSet(rules)) == 2
    # different families never conflict
    assert len(RuleSet([ActionRule("X", p, "a"), ActionRule("Y", q, "b")])) == 2


@pytest.mark.parametrize(
    "text",
    [
        "Up-Down,exact(0),play\n",
        "Up-Down,sometimes,play\n",
        "Up-Down,exact(1)\n",
        "Up-Down,any,play,colour\n",
        "Up-Down,any,play\nUp-Down,exact(2),ff\n",
        ",any,play\n",
    ],
)
def test_parse_errors(text):
    """[TRIVIAL] malformed lines, bad predicates, unknown attributes and overlaps."""
    with pytest.raises(ConfigError):
        parse_rules(text)


def test_parse_error_names_line():
    """[TRIVIAL]"""
    with pytest.raises(ConfigError, match=":2:"):
        parse_rules("# header\nUp,bogus,x\n", "r.csv")


def test_default_table_is_valid():
    """[TRIVIAL]"""
    assert len(RULES) == 7


@settings(max_examples=500)
@given(st.sampled_from(["Up", "Down", "Up-Down", "Down-Up", "Up-Pause-Down", "Down-Pause-Up", "Infinity", UNKNOWN, "Other"]),
       st.integers(1, 20))
def test_total_and_deterministic(family, count):
    """[DERIVED] every gesture maps to exactly one action or none, the same way each time."""
    g = _g(family, count)
    firing = [r for r in RULES if r.fires(g)] if g.known else []
    a = map_action(g, RULES)
    assert len(firing) <= 1
    assert (a is None) == (not firing)
    if a is not None:
        assert a.action_name == firing[0].action_name
    assert map_action(g, RULES) == a
