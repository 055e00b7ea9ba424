"""Scoring against simulator ground truth and the desk-scale experiments.

A predicted event matches a true one when the overlap covers at least half
of the true span.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .denoise import denoise_signal
from .fusion import ApDecision, fuse
from .gestures import UNKNOWN, encode, load_templates
from .pipeline import PipelineConfig, run_pipeline
from .primitives import ExtractorConfig, Magnitude, Speed, extract_primitives
from .segment import SegmenterConfig, detect_preambles
from .simulate import (
    Gesture,
    GroundTruth,
    InterferenceBurst,
    Preamble,
    ScenarioScript,
    generate_scenario,
    gesture_span,
    load_scenario,
)
from .trace import load_trace

MATCH_OVERLAP = 0.5
MISSED = "missed"
SPURIOUS = "none"
# expected sign strings of the three primitive trials: rise, fall, pause
PRIMITIVE_TRIALS = (("rising", "Up", "+"), ("falling", "Down", "-"), ("pause", "Down-Pause-Up", "-0+"))
TRIAL_LEAD_S = 1.5
TRIAL_MAGNITUDES = (Magnitude.HIGH,)
BASELINE_RANGE_DBM = (-55.0, -40.0)


@dataclass
class ConfusionMatrix:
    labels: list
    counts: np.ndarray = None

    def __post_init__(self):
        self.labels = list(self.labels)
        n = len(self.labels)
        if self.counts is None:
            self.counts = np.zeros((n, n), dtype=int)
        self.counts = np.asarray(self.counts, dtype=int)
        if self.counts.shape != (n, n) or np.any(self.counts < 0):
            raise ValueError("counts must be a non-negative square grid matching labels")

    def _index(self, label):
        if label not in self.labels:
            self.labels.append(label)
            n = len(self.labels)
            grown = np.zeros((n, n), dtype=int)
            grown[: n - 1, : n - 1] = self.counts
            self.counts = grown
        return self.labels.index(label)

    def add(self, truth, predicted, n=1):
        i = self._index(truth)
        j = self._index(predicted)
        self.counts[i, j] += n

    def row_totals(self):
        return self.counts.sum(axis=1)

    def rates(self):
        tot = self.row_totals()[:, None]
        return np.divide(self.counts, tot, out=np.zeros(self.counts.shape), where=tot > 0)

    def accuracy(self):
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["truth\\predicted", *self.labels])
        for label, row in zip(self.labels, self.counts):
            w.writerow([label, *row.tolist()])
        return buf.getvalue()


def _overlap(a0, a1, b0, b1):
    return max(0.0, min(a1, b1) - max(a0, b0))


def _matches(t0, t1, p0, p1):
    length = t1 - t0
    return length > 0 and _overlap(t0, t1, p0, p1) >= MATCH_OVERLAP * length


def cdf(values, points):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return [0.0 for _ in points]
    return [float(np.mean(values <= p)) for p in points]


@dataclass
class EvalReport:
    primitive_tp_rate: dict = field(default_factory=dict)
    primitive_fp_rate: dict = field(default_factory=dict)
    gesture_confusion: ConfusionMatrix = None
    count_errors: list = field(default_factory=list)
    frequency_errors_s: list = field(default_factory=list)
    false_preambles_per_hour: float = 0.0
    hours: float = 0.0
    accuracy_vs_sigma: list = field(default_factory=list)  # (sigma, accuracy)
    accuracy_vs_aps: list = field(default_factory=list)  # (n_aps, accuracy)

    def count_cdf(self, points=(0, 1, 2, 3)):
        return cdf(self.count_errors, points)

    def frequency_cdf(self, points=(0.25, 0.5, 1.0, 2.0)):
        return cdf(self.frequency_errors_s, points)

    def to_text(self):
        lines = ["# evaluation report"]
        for kind in sorted(self.primitive_tp_rate):
            lines.append(
                f"primitive {kind}: tp_rate={self.primitive_tp_rate[kind]:.3f} "
                f"fp_rate={self.primitive_fp_rate.get(kind, 0.0):.3f}"
            )
        if self.gesture_confusion is not None:
            lines.append(f"gesture accuracy: {self.gesture_confusion.accuracy():.3f}")
        if self.count_errors:
            lines.append(f"exact count: {self.count_cdf((0,))[0]:.3f} over {len(self.count_errors)} gestures")
        if self.frequency_errors_s:
            lines.append(
                f"period error <= 1 s: {self.frequency_cdf((1.0,))[0]:.3f} over {len(self.frequency_errors_s)} gestures"
            )
        lines.append(f"false preambles per hour: {self.false_preambles_per_hour:.3f} ({self.hours:.3f} h)")
        for s, a in self.accuracy_vs_sigma:
            lines.append(f"accuracy at sigma={s:g}: {a:.3f}")
        for n, a in self.accuracy_vs_aps:
            lines.append(f"accuracy with {n} APs: {a:.3f}")
        return "\n".join(lines) + "\n"

    def write(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.txt").write_text(self.to_text())
        if self.gesture_confusion is not None:
            (d / "confusion.csv").write_text(self.gesture_confusion.to_csv())
        rows = [("kind", "tp_rate", "fp_rate")]
        rows += [(k, self.primitive_tp_rate[k], self.primitive_fp_rate.get(k, 0.0)) for k in sorted(self.primitive_tp_rate)]
        _write_rows(d / "primitives.csv", rows)
        _write_rows(d / "count_cdf.csv", [("abs_count_error", "cdf")] + list(zip(range(4), self.count_cdf())))
        pts = (0.25, 0.5, 1.0, 2.0)
        _write_rows(d / "frequency_cdf.csv", [("period_error_s", "cdf")] + list(zip(pts, self.frequency_cdf(pts))))
        if self.accuracy_vs_sigma:
            _write_rows(d / "accuracy_vs_sigma.csv", [("sigma_db", "accuracy")] + list(self.accuracy_vs_sigma))
        if self.accuracy_vs_aps:
            _write_rows(d / "accuracy_vs_aps.csv", [("n_aps", "accuracy")] + list(self.accuracy_vs_aps))


def _write_rows(path, rows):
    with Path(path).open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


# ---------------------------------------------------------------------------
# scoring one run


def period_error_s(true_hz, predicted_hz):
    """Error of the repetition period in seconds (inf if either is zero)."""
    if true_hz <= 0 or predicted_hz <= 0:
        return math.inf
    return abs(1.0 / predicted_hz - 1.0 / true_hz)


@dataclass
class _Tally:
    confusion: ConfusionMatrix
    prim_true: dict = field(default_factory=dict)
    prim_hit: dict = field(default_factory=dict)
    prim_pred: dict = field(default_factory=dict)
    prim_false: dict = field(default_factory=dict)
    count_errors: list = field(default_factory=list)
    freq_errors: list = field(default_factory=list)
    false_preambles: int = 0
    seconds: float = 0.0


def score_run(result, truth, duration_s, tally):
    """Add one pipeline result to the running tallies."""
    tally.seconds += duration_s
    used = set()
    for g in truth.gestures:
        hit = None
        for k, p in enumerate(result.gestures):
            if k not in used and _matches(g.start_s, g.end_s, p.start_s, p.end_s):
                hit = k
                break
        if hit is None:
            tally.confusion.add(g.label, MISSED)
            continue
        used.add(hit)
        p = result.gestures[hit]
        tally.confusion.add(g.label, p.family_name)
        if p.known:
            tally.count_errors.append(abs(p.count - g.attrs["count"]))
            if g.attrs["count"] > 1:
                tally.freq_errors.append(period_error_s(g.attrs["frequency_hz"], p.frequency_hz))
    for k, p in enumerate(result.gestures):
        if k not in used:
            tally.confusion.add(SPURIOUS, p.family_name)
    fused = [e for s in result.sessions for e in s.fused]
    truth_prims = truth.primitives
    for t in truth_prims:
        tally.prim_true[t.label] = tally.prim_true.get(t.label, 0) + 1
        if any(e.kind.value == t.label and _matches(t.start_s, t.end_s, e.start_s, e.end_s) for e in fused):
            tally.prim_hit[t.label] = tally.prim_hit.get(t.label, 0) + 1
    for e in fused:
        kind = e.kind.value
        tally.prim_pred[kind] = tally.prim_pred.get(kind, 0) + 1
        if not any(t.label == kind and _matches(t.start_s, t.end_s, e.start_s, e.end_s) for t in truth_prims):
            tally.prim_false[kind] = tally.prim_false.get(kind, 0) + 1
    for s in result.sessions:
        if not any(_overlap(p.start_s, p.end_s, s.preamble_start_s, s.preamble_end_s) > 0 for p in truth.preambles):
            tally.false_preambles += 1


def _report(tally):
    kinds = sorted(set(tally.prim_true) | set(tally.prim_pred))
    tp = {k: tally.prim_hit.get(k, 0) / tally.prim_true[k] if tally.prim_true.get(k) else 0.0 for k in kinds}
    fp = {k: tally.prim_false.get(k, 0) / tally.prim_pred[k] if tally.prim_pred.get(k) else 0.0 for k in kinds}
    hours = tally.seconds / 3600.0
    return EvalReport(
        primitive_tp_rate=tp,
        primitive_fp_rate=fp,
        gesture_confusion=tally.confusion,
        count_errors=tally.count_errors,
        frequency_errors_s=tally.freq_errors,
        false_preambles_per_hour=tally.false_preambles / hours if hours > 0 else 0.0,
        hours=hours,
    )


def corpus_items(directory):
    """``(name, bundle, truth)`` for every run in a corpus directory.

    A run is a sub-directory holding ``trace.csv`` and ``truth.jsonl`` (as
    written by the ``generate`` command) or a ``*.scenario`` file.
    """
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory {root} not found")
    items = []
    for path in sorted(root.iterdir()):
        if path.is_dir() and (path / "trace.csv").exists() and (path / "truth.jsonl").exists():
            items.append((path.name, load_trace(path / "trace.csv"), GroundTruth.load(path / "truth.jsonl")))
        elif path.suffix == ".scenario":
            bundle, truth = generate_scenario(load_scenario(path))
            items.append((path.name, bundle, truth))
    return items


def evaluate(items, config=PipelineConfig(), templates=None, rules=None):
    """Run the pipeline over ``(name, bundle, truth)`` items and score it."""
    items = list(items)
    if not items:
        raise ValueError("evaluation corpus is empty")
    templates = load_templates() if templates is None else templates
    labels = list(templates.names) + [UNKNOWN, MISSED]
    tally = _Tally(ConfusionMatrix(labels))
    for _, bundle, truth in items:
        result = run_pipeline(bundle, config, templates, rules)
        duration = max(len(t) for t in bundle) / bundle.sample_rate_hz
        score_run(result, truth, duration, tally)
    return _report(tally)


# ---------------------------------------------------------------------------
# primitive trials


def _trial_script(rng, kind_index, sigma, n_aps, templates, magnitudes):
    _, family, _ = PRIMITIVE_TRIALS[kind_index]
    speed = (Speed.HIGH, Speed.MEDIUM, Speed.LOW)[rng.integers(3)]
    magnitude = magnitudes[rng.integers(len(magnitudes))]
    baselines = tuple(float(b) for b in rng.uniform(*BASELINE_RANGE_DBM, n_aps))
    g = Gesture(family, TRIAL_LEAD_S, 1, speed, magnitude)
    end = gesture_span(g, templates).end_s
    seed = int(rng.integers(2**31))
    return ScenarioScript(end + TRIAL_LEAD_S, baselines, sigma, (g,), seed=seed)


def primitive_decision(trace, extractor=ExtractorConfig()):
    """Sign string one AP reports for a single-primitive trial trace."""
    clean, s = denoise_signal(trace.samples, return_sigma=True)
    prims = extract_primitives(trace.with_samples(clean), replace(extractor, noise_sigma=s), reference=trace)
    return encode(prims)


@dataclass(frozen=True)
class TrialResult:
    expected: str
    per_ap: tuple  # (ap_id, mean_rssi, decision)

    def fused(self, n_aps=None):
        votes = self.per_ap if n_aps is None else self.per_ap[:n_aps]
        return fuse([ApDecision(ap, rssi, d) for ap, rssi, d in votes])


def primitive_trials(sigma, n_trials, seed=0, n_aps=3, templates=None, extractor=ExtractorConfig(),
                     magnitudes=TRIAL_MAGNITUDES):
    """Run ``n_trials`` single-primitive trials, cycling rise, fall, pause.

    Speed is drawn uniformly per trial, magnitude from ``magnitudes``.
    """
    templates = load_templates() if templates is None else templates
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_trials):
        idx = k % len(PRIMITIVE_TRIALS)
        script = _trial_script(rng, idx, sigma, n_aps, templates, tuple(magnitudes))
        bundle, _ = generate_scenario(script, templates)
        per_ap = tuple((t.ap_id, t.mean_rssi, primitive_decision(t, extractor)) for t in bundle)
        out.append(TrialResult(PRIMITIVE_TRIALS[idx][2], per_ap))
    return out


def single_ap_accuracy(trials):
    hits = [d == t.expected for t in trials for _, _, d in t.per_ap]
    return float(np.mean(hits)) if hits else 0.0


def fused_accuracy(trials, n_aps=None):
    hits = [t.fused(n_aps) == t.expected for t in trials]
    return float(np.mean(hits)) if hits else 0.0


def accuracy_vs_sigma(sigmas, n_trials, seed=0, n_aps=1):
    return [(float(s), single_ap_accuracy(primitive_trials(s, n_trials, seed, n_aps))) for s in sigmas]


def accuracy_vs_aps(sigma, ap_counts, n_trials, seed=0):
    trials = primitive_trials(sigma, n_trials, seed, max(ap_counts))
    return [(n, fused_accuracy(trials, n)) for n in ap_counts]


def calibrate_sigma(target=0.875, n_trials=300, seed=0, lo=0.0, hi=8.0, tol=0.02, n_aps=1):
    """Noise level at which single-AP primitive accuracy is ``target``.

    Bisection on sigma; every evaluation reuses the same trial seed, so the
    accuracy curve being searched is fixed.
    """
    if not 0 < target < 1:
        raise ValueError("target accuracy must lie in (0, 1)")
    acc = lambda s: single_ap_accuracy(primitive_trials(s, n_trials, seed, n_aps))  # noqa: E731
    if acc(hi) > target:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if acc(mid) >= target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# preamble false detections


def interference_script(seed, duration_s=3600.0, sigma=1.0, burst_every_s=20.0, amplitude_db=10.0):
    """One AP with noise and interference bursts but no preamble."""
    rng = np.random.default_rng(seed)
    events = []
    t = float(rng.uniform(2.0, burst_every_s))
    while t < duration_s - 12.0:
        length = float(rng.uniform(3.0, 10.0))
        shape = "humanlike" if rng.random() < 0.5 else "randomwalk"
        amp = float(amplitude_db * rng.uniform(0.5, 1.5))
        events.append(InterferenceBurst(t, length, amp, shape))
        t += length + float(rng.uniform(2.0, 2 * burst_every_s))
    return ScenarioScript(duration_s, (-45.0,), sigma, tuple(events), seed=int(seed), gains=(1.0,))


def false_preamble_count(script, updowns, config=SegmenterConfig()):
    bundle, _ = generate_scenario(script)
    cfg = replace(config, preamble_updown_count=updowns)
    return len(detect_preambles(bundle.traces[0], cfg))


# ---------------------------------------------------------------------------
# count and frequency


def count_trials(sigma, n, seed=0, n_aps=3, families=None, max_count=5, config=PipelineConfig()):
    """Preamble plus one repeated gesture per run, full pipeline.

    Returns ``(count_ok, period_errors)``: one bool per run and one period
    error per run with a true count of at least two.
    """
    templates = load_templates()
    families = list(families or ("Up-Down", "Down-Up"))
    rng = np.random.default_rng(seed)
    ok, errors = [], []
    for _ in range(n):
        family = families[rng.integers(len(families))]
        count = int(rng.integers(1, max_count + 1))
        speed = (Speed.HIGH, Speed.MEDIUM)[rng.integers(2)]
        g = Gesture(family, 8.5, count, speed, Magnitude.HIGH)
        span = gesture_span(g, templates)
        baselines = tuple(float(b) for b in rng.uniform(*BASELINE_RANGE_DBM, n_aps))
        script = ScenarioScript(
            span.end_s + 4.0, baselines, sigma, (Preamble(3.0, 10.0, 2), g), seed=int(rng.integers(2**31))
        )
        bundle, truth = generate_scenario(script, templates)
        result = run_pipeline(bundle, config, templates)
        t = truth.gestures[0]
        pred = next((p for p in result.gestures if _matches(t.start_s, t.end_s, p.start_s, p.end_s)), None)
        good = pred is not None and pred.known and pred.count == count
        ok.append(good)
        if count > 1:
            errors.append(period_error_s(t.attrs["frequency_hz"], pred.frequency_hz) if good else math.inf)
    return ok, errors


__all__ = [
    "ConfusionMatrix",
    "EvalReport",
    "accuracy_vs_aps",
    "accuracy_vs_sigma",
    "calibrate_sigma",
    "corpus_items",
    "count_trials",
    "evaluate",
    "false_preamble_count",
    "fused_accuracy",
    "interference_script",
    "period_error_s",
    "primitive_trials",
    "single_ap_accuracy",
]
