"""Command-line front end.

    rssigest generate <script> -o <dir>
    rssigest run <trace.csv> [--templates f] [--rules f] [--dump-stages dir]
    rssigest evaluate <corpus-dir> -o <report-dir>
    rssigest calibrate-sigma --target-accuracy 0.875

Exit status is 0 on success, 1 for invalid input or configuration and 2
for file-system errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .actions import load_rules
from .denoise import DenoiseConfig
from .errors import RssiGestError
from .evaluate import calibrate_sigma, corpus_items, evaluate
from .gestures import encode, load_templates
from .pipeline import PipelineConfig, run_pipeline, stage_dumps
from .segment import SegmenterConfig
from .simulate import generate_scenario, load_scenario
from .trace import load_trace, save_trace

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad arguments are a validation error, not argparse's default status 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _parser():
    p = _Parser(prog="rssigest", description="RSSI hand-gesture recognition")
    p.add_argument("--seed", type=int, default=None, help="random seed (scenario noise, trial draws)")
    p.add_argument("--sample-rate", type=float, default=None, help="sample rate in Hz for generated traces")
    p.add_argument("--levels", type=int, default=None, help="wavelet levels used for denoising")
    p.add_argument("--silence-timeout", type=float, default=None, help="seconds of silence closing a gesture")
    p.add_argument("--preamble-updowns", type=int, default=None, help="up-down motions in the preamble")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a scenario script to trace.csv + truth.jsonl")
    g.add_argument("script")
    g.add_argument("-o", "--output", required=True)

    r = sub.add_parser("run", help="recognise gestures in a trace file")
    r.add_argument("trace")
    r.add_argument("--templates", default=None)
    r.add_argument("--rules", default=None)
    r.add_argument("--dump-stages", default=None, metavar="DIR")
    r.add_argument("--fusion", choices=("primitive", "gesture"), default="primitive")

    e = sub.add_parser("evaluate", help="score the pipeline on a corpus directory")
    e.add_argument("corpus")
    e.add_argument("-o", "--output", required=True)
    e.add_argument("--templates", default=None)
    e.add_argument("--rules", default=None)

    c = sub.add_parser("calibrate-sigma", help="noise level giving a target single-AP primitive accuracy")
    c.add_argument("--target-accuracy", type=float, default=0.875)
    c.add_argument("--trials", type=int, default=300)
    return p


def _pipeline_config(args, fusion="primitive"):
    denoise = DenoiseConfig() if args.levels is None else DenoiseConfig(levels=args.levels)
    seg = SegmenterConfig()
    if args.silence_timeout is not None:
        seg = replace(seg, silence_timeout_s=args.silence_timeout)
    if args.preamble_updowns is not None:
        seg = replace(seg, preamble_updown_count=args.preamble_updowns)
    return PipelineConfig(denoise=denoise, segmenter=seg, fusion=fusion)


def _generate(args, out):
    script = load_scenario(args.script)
    if args.seed is not None:
        script = replace(script, seed=args.seed)
    if args.sample_rate is not None:
        script = replace(script, sample_rate_hz=args.sample_rate)
    bundle, truth = generate_scenario(script)
    d = Path(args.output)
    d.mkdir(parents=True, exist_ok=True)
    save_trace(bundle, d / "trace.csv")
    truth.save(d / "truth.jsonl")
    print(f"wrote {d / 'trace.csv'} ({len(bundle)} APs) and {d / 'truth.jsonl'} ({len(truth.spans)} spans)", file=out)


def _run(args, out):
    bundle = load_trace(args.trace)
    templates = load_templates(args.templates)
    rules = load_rules(args.rules)
    result = run_pipeline(bundle, _pipeline_config(args, args.fusion), templates, rules)
    for g in result.gestures:
        rec = {
            "type": "gesture",
            "family": g.family_name,
            "count": g.count,
            "frequency_hz": round(g.frequency_hz, 4),
            "start_s": round(g.start_s, 3),
            "end_s": round(g.end_s, 3),
            "primitives": g.primitive_string,
        }
        print(json.dumps(rec), file=out)
    for a in result.actions:
        rec = {"type": "action", "action": a.action_name, "family": a.family_name,
               "start_s": round(a.start_s, 3), "end_s": round(a.end_s, 3), "attributes": a.attributes}
        print(json.dumps(rec), file=out)
    if args.dump_stages:
        _dump(result, bundle, Path(args.dump_stages))


def _dump(result, bundle, directory):
    directory.mkdir(parents=True, exist_ok=True)
    for ap, d in stage_dumps(result, bundle).items():
        with (directory / f"{ap}_signal.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("time_s", "raw_dbm", "denoised_dbm", f"detail_level{d['level']}"))
            for row in zip(d["time_s"], d["raw"], d["denoised"], d["detail"]):
                w.writerow(tuple(f"{v:.4f}" for v in row))
        with (directory / f"{ap}_primitives.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("session", "kind", "start_s", "end_s", "amplitude_db", "speed", "magnitude"))
            for s in d.get("sessions", []):
                for p in s["primitives"]:
                    w.writerow((s["session"], p.kind.value, f"{p.start_s:.3f}", f"{p.end_s:.3f}",
                                f"{p.amplitude_db:.3f}", p.speed.value, p.magnitude.value))
        lines = [f"session {s['session']}: {s['encoded']}" for s in d.get("sessions", [])]
        (directory / f"{ap}_encoded.txt").write_text("".join(line + "\n" for line in lines))
    fused = [f"session {k}: {encode(s.fused)}" for k, s in enumerate(result.sessions)]
    (directory / "fused_encoded.txt").write_text("".join(line + "\n" for line in fused))


def _evaluate(args, out):
    items = corpus_items(args.corpus)
    if not items:
        raise RssiGestError(f"no runs found in {args.corpus}")
    templates = load_templates(args.templates)
    rules = load_rules(args.rules)
    report = evaluate(items, _pipeline_config(args), templates, rules)
    report.write(args.output)
    out.write(report.to_text())


def _calibrate(args, out):
    seed = 0 if args.seed is None else args.seed
    if args.trials < 3:
        raise RssiGestError("--trials must be at least 3")
    sigma = calibrate_sigma(args.target_accuracy, args.trials, seed)
    print(f"sigma* = {sigma:.3f} dB (target single-AP primitive accuracy {args.target_accuracy:g})", file=out)


COMMANDS = {"generate": _generate, "run": _run, "evaluate": _evaluate, "calibrate-sigma": _calibrate}


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    args = _parser().parse_args(argv)
    try:
        COMMANDS[args.command](args, out)
    except OSError as exc:
        print(f"rssigest: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RssiGestError, ValueError) as exc:
        print(f"rssigest: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
