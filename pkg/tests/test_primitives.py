import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rssigest.denoise import denoise_signal
from rssigest.primitives import (
    ExtractorConfig,
    Kind,
    Magnitude,
    PrimitiveEvent,
    Speed,
    detect_edges,
    detect_pauses,
    extract_primitives,
    flip_primitives,
    interior_pauses,
    select_analysis_level,
    speed_class,
)
from rssigest.segment import CalibrationProfile
from rssigest.simulate import logistic_ramp, synth_gesture_waveform
from rssigest.trace import RssiTrace

RATE = 50.0


def _trace(x):
    return RssiTrace("AP1", x, RATE, 0.0)


def _extract(raw, calibration=None, config=ExtractorConfig()):
    """Denoise, then extract with the raw trace as measurement reference."""
    clean, sigma = denoise_signal(raw, return_sigma=True)
    cfg = ExtractorConfig(**{**config.__dict__, "noise_sigma": sigma})
    return extract_primitives(_trace(clean), cfg, calibration=calibration, reference=_trace(raw))


def _ramp(amplitude, duration_s, lead_s=2.0, tail_s=2.0, base=-45.0):
    t = np.arange(int((lead_s + duration_s + tail_s) * RATE)) / RATE
    return base + amplitude * logistic_ramp((t - lead_s) / duration_s)


def _wave(family, count=1, speed=Speed.HIGH, magnitude=Magnitude.HIGH, base=-45.0):
    x, truth = synth_gesture_waveform(family, count, speed, magnitude, base, lead_s=2.0, tail_s=2.0)
    return x, truth


# --- speed discretisation ------------------------------------------------------


@pytest.mark.parametrize("d, s", [(0.5, Speed.HIGH), (0.7499, Speed.HIGH), (0.75, Speed.MEDIUM),
                                  (1.5, Speed.MEDIUM), (1.5001, Speed.LOW), (3.0, Speed.LOW)])
def test_speed_buckets(d, s):
    """[TRIVIAL] High < 0.75 s <= Medium <= 1.5 s < Low."""
    assert speed_class(d) is s


@settings(max_examples=500)
@given(st.floats(1e-3, 100, allow_nan=False))
def test_speed_property(d):
    """[DERIVED] speed is exactly the three-bucket rule of duration."""
    expected = Speed.HIGH if d < 0.75 else (Speed.MEDIUM if d <= 1.5 else Speed.LOW)
    assert speed_class(d) is expected


def test_event_invariants():
    """[TRIVIAL] positive span; pauses carry no speed or magnitude; edges need a speed."""
    with pytest.raises(ValueError):
        PrimitiveEvent(Kind.RISING, 1.0, 1.0, 3.0, Speed.HIGH)
    with pytest.raises(ValueError):
        PrimitiveEvent(Kind.PAUSE, 0.0, 1.0, speed=Speed.HIGH)
    with pytest.raises(ValueError):
        PrimitiveEvent(Kind.FALLING, 0.0, 1.0, 3.0)


def test_flip_involution():
    """[TRIVIAL] flipping twice restores the sequence; pauses are untouched."""
    seq = [PrimitiveEvent(Kind.RISING, 0, 1, 3, Speed.HIGH), PrimitiveEvent(Kind.PAUSE, 1, 2),
           PrimitiveEvent(Kind.FALLING, 2, 3, 3, Speed.HIGH)]
    once = flip_primitives(seq)
    assert [e.kind for e in once] == [Kind.FALLING, Kind.PAUSE, Kind.RISING]
    assert flip_primitives(once) == seq


# --- level selection ---------------------------------------------------------------


def test_slow_gesture_selects_coarser_level():
    """[DERIVED] a 2 s edge pair selects a strictly coarser level than a 0.5 s pair."""
    fast, _ = _wave("Up-Down", 1, Speed.HIGH)
    slow, _ = _wave("Up-Down", 1, Speed.LOW)
    assert select_analysis_level(slow).level > select_analysis_level(fast).level


def test_constant_trace_default_level():
    """[TRIVIAL] no motion -> default level 5 with the no-motion flag."""
    choice = select_analysis_level(np.full(500, -45.0))
    assert choice.level == 5 and choice.motion is False


def test_two_speeds_two_levels():
    """[PAPER] a fast then a slow motion in one trace: each half selects its own level."""
    fast, _ = _wave("Up-Down", 2, Speed.HIGH)
    slow, _ = _wave("Up-Down", 2, Speed.LOW)
    x = np.r_[fast, slow]
    first = select_analysis_level(x[: fast.size]).level
    second = select_analysis_level(x[fast.size:]).level
    assert first < second


# --- edges ---------------------------------------------------------------------------


def test_single_rise():
    """[DERIVED] an 8 dB rise over 0.5 s -> exactly one RisingEdge, speed High."""
    prims = _extract(_ramp(8.0, 0.5))
    assert [(p.kind, p.speed) for p in prims] == [(Kind.RISING, Speed.HIGH)]
    assert prims[0].amplitude_db == pytest.approx(8.0, abs=0.5)
    assert prims[0].start_s == pytest.approx(2.0, abs=0.1) and prims[0].end_s == pytest.approx(2.5, abs=0.1)


@pytest.mark.parametrize("speed, duration", [(Speed.HIGH, 0.5), (Speed.MEDIUM, 1.1), (Speed.LOW, 2.0)])
def test_edge_duration_recovered(speed, duration):
    """[DERIVED] measured edge span matches the simulated ramp duration within 15%."""
    x, truth = _wave("Up-Down", 1, speed)
    edges = detect_edges(_trace(x), ExtractorConfig(noise_sigma=0.0), reference=_trace(x))
    assert [e.kind for e in edges] == [Kind.RISING, Kind.FALLING]
    for e, t in zip(edges, truth.primitives):
        assert e.duration_s == pytest.approx(duration, rel=0.15)
        assert e.speed is speed
        assert abs(e.center_s - 0.5 * (t.start_s + t.end_s)) < 0.1


def test_up_down_order():
    """[PAPER] up-down -> RisingEdge then FallingEdge."""
    x, _ = _wave("Up-Down")
    assert [p.kind for p in _extract(x)] == [Kind.RISING, Kind.FALLING]


def test_pure_noise_no_edges():
    """[DERIVED] sigma = 1 dBm noise only: no edges in >= 95 of 100 trials."""
    rng = np.random.default_rng(11)
    clean_runs = sum(not _extract(-45.0 + rng.normal(0, 1.0, 500)) for _ in range(100))
    assert clean_runs >= 95


def test_polarity_never_inverted():
    """[DERIVED] monotone rises at SNR >= 10 dB never yield a FallingEdge (200 trials), and vice versa."""
    rng = np.random.default_rng(12)
    for k in range(200):
        amp = rng.uniform(5.0, 10.0)
        sigma = amp / 10 ** 0.5 / 2.0  # 20 log10(amp / (2 sigma)) >= 10 dB
        sign = 1.0 if k % 2 == 0 else -1.0
        raw = _ramp(sign * amp, rng.uniform(0.4, 2.0))
        raw = raw + rng.normal(0, sigma, raw.size)
        wrong = Kind.FALLING if sign > 0 else Kind.RISING
        assert wrong not in [p.kind for p in _extract(raw)]


@pytest.mark.parametrize("family", ["Up-Down", "Down-Pause-Up", "Infinity", "Up"])
def test_offset_invariance(family):
    """[DERIVED] adding a constant to every sample changes no kinds, spans or speeds."""
    x, _ = _wave(family, 2, Speed.MEDIUM)
    base = [(p.kind, round(p.start_s, 6), round(p.end_s, 6), p.speed) for p in _extract(x)]
    shifted = [(p.kind, round(p.start_s, 6), round(p.end_s, 6), p.speed) for p in _extract(x - 17.0)]
    assert base == shifted


# --- pauses ------------------------------------------------------------------------


def test_constant_trace_one_pause():
    """[TRIVIAL] a flat 3 s trace is one pause covering (almost) all of it."""
    pauses = detect_pauses(_trace(np.full(150, -45.0)))
    assert len(pauses) == 1
    assert pauses[0].duration_s >= 2.5


def test_noisy_constant_no_pause():
    """[TRIVIAL] variance 4 dB^2 exceeds the 1 dB^2 threshold everywhere."""
    x = -45.0 + np.random.default_rng(13).normal(0, 2.0, 500)
    assert detect_pauses(_trace(x)) == []


def test_up_pause_down():
    """[DERIVED] up-pause-down -> [Rising, Pause, Falling], pause 1 s +- 0.2 s between the edges."""
    x, truth = _wave("Up-Pause-Down")
    prims = _extract(x)
    assert [p.kind for p in prims] == [Kind.RISING, Kind.PAUSE, Kind.FALLING]
    pause = prims[1]
    assert pause.duration_s == pytest.approx(1.0, abs=0.2)
    assert prims[0].end_s <= pause.start_s and pause.end_s <= prims[2].start_s


def test_no_motion_empty():
    """[TRIVIAL] a flat trace has no primitives at all (pauses need bounding edges)."""
    assert extract_primitives(_trace(np.full(400, -50.0))) == []


def test_magnitude_from_calibration():
    """[DERIVED] with a 10 dB preamble drop the High cut is 7 dB: 4 dB -> Low, 12 dB -> High."""
    calib = CalibrationProfile(10.0, 5, False, -45.0)
    small = _extract(_ramp(4.0, 0.5), calib)
    large = _extract(_ramp(12.0, 0.5), calib)
    assert [p.magnitude for p in small] == [Magnitude.LOW]
    assert [p.magnitude for p in large] == [Magnitude.HIGH]
    assert _extract(_ramp(12.0, 0.5))[0].magnitude is Magnitude.NA


def test_interior_pauses_rules():
    """[DERIVED] only the part of a pause between the first and last edge, and at least 0.5 s, survives."""
    edges = [PrimitiveEvent(Kind.RISING, 1.0, 1.5, 5, Speed.HIGH), PrimitiveEvent(Kind.FALLING, 3.0, 3.5, 5, Speed.HIGH)]
    pauses = [PrimitiveEvent(Kind.PAUSE, 0.0, 1.2), PrimitiveEvent(Kind.PAUSE, 1.4, 3.2), PrimitiveEvent(Kind.PAUSE, 3.4, 6.0)]
    out = interior_pauses(pauses, edges)
    assert [(p.start_s, p.end_s) for p in out] == [(1.5, 3.0)]
    short = [PrimitiveEvent(Kind.PAUSE, 1.5, 1.9)]
    assert interior_pauses(short, edges) == []


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.sampled_from(["+", "-", "0"]), min_size=1, max_size=6),
    st.sampled_from([Speed.HIGH, Speed.MEDIUM]),
    st.integers(0, 2**31 - 1),
)
def test_output_ordered_and_disjoint(pattern, speed, seed):
    """[DERIVED] extracted events are strictly time-ordered and pairwise non-overlapping."""
    from rssigest.gestures import GestureTemplate, TemplateSet

    tpl = TemplateSet([GestureTemplate("X", "".join(pattern), True)])
    x, _ = synth_gesture_waveform("X", 1, speed, Magnitude.HIGH, -45.0, lead_s=2.0, tail_s=2.0, templates=tpl)
    x = x + np.random.default_rng(seed).normal(0, 0.5, x.size)
    prims = _extract(x)
    for a, b in zip(prims, prims[1:]):
        assert a.start_s < b.start_s
        assert a.end_s <= b.start_s + 1e-9
    for p in prims:
        assert p.end_s > p.start_s
        if p.kind is Kind.PAUSE:
            assert p.duration_s >= 0.5 - 1e-9


@pytest.mark.parametrize("kwargs", [dict(analysis_level=0), dict(min_level=3, max_level=2), dict(pause_min_s=0)])
def test_config_validation(kwargs):
    """[TRIVIAL]"""
    with pytest.raises(ValueError):
        ExtractorConfig(**kwargs)
