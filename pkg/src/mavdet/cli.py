"""Command-line interface: run, eval, bench, and synth subcommands."""

from __future__ import annotations

import argparse
import dataclasses
import json
import statistics
import sys
import time
from pathlib import Path

import cv2

from . import io as seqio
from .appearance import (
    Detection,
    DetectorConfig,
    OracleClassifier,
    OracleDetector,
    PassthroughClassifier,
)
from .errors import EmptyInputError, MavdetError
from .evaluation import (
    average_precision_11pt,
    load_conditions,
    load_ground_truth,
    match_frame,
    summarize,
)
from .geometry import BBox
from .motion_classifier import MotionClassifierConfig
from .pipeline import Pipeline, PipelineConfig
from .protocol import ProcessClassifier, ProcessDetector
from .segmentation import SegmentationConfig
from .synthetic import PRESET_NAMES, generate_scene, preset_scene, write_sequence

__all__ = ["main", "build_parser"]


def _add_common_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="image directory, or - for a raw stream on stdin")
    p.add_argument("--detector-cmd", default=None,
                   help="appearance backend: a command line, oracle:<gt.csv>, or omitted for motion-only")
    p.add_argument("--classifier-cmd", default="passthrough",
                   help="patch classifier backend: a command line, oracle:<gt.csv>, or passthrough")
    p.add_argument("--t0", type=float, default=0.5, help="global detector confidence threshold")
    p.add_argument("--t1", type=float, default=0.1, help="local detector confidence threshold")
    p.add_argument("--t2", type=float, default=5.0, help="difference binarization base threshold")
    p.add_argument("--t3", type=float, default=0.8, help="angle variance limit")
    p.add_argument("--t4", type=float, default=0.8, help="speed variance limit")
    p.add_argument("--t5", type=float, default=1.0, help="mean speed floor")
    p.add_argument("--d1", type=float, default=15.0, help="candidate box merge distance")
    p.add_argument("--alpha", type=float, default=1.0, help="light intensity term gain")
    p.add_argument("--beta", type=float, default=1.0, help="background motion term gain")
    p.add_argument("--lost-limit", type=int, default=30, help="local misses before going global")
    p.add_argument("--region-base", type=int, default=300, help="search region base side")
    p.add_argument("--backend-timeout", type=float, default=0.5, help="external backend timeout in seconds")
    p.add_argument("--seed", type=int, default=0, help="seed for oracle backends")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mavdet",
        description="Global-local detection of small aerial vehicles in video",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process a sequence and write a detection log")
    _add_common_run_flags(run)
    run.add_argument("--out", default=None, help="output directory (default: log to stdout)")
    run.add_argument("--annotate", action="store_true", help="write annotated frames")

    ev = sub.add_parser("eval", help="score a detection log against ground truth")
    ev.add_argument("--log", required=True, help="detection log (JSON lines from run)")
    ev.add_argument("--gt", required=True, help="ground truth csv or json lines")
    ev.add_argument("--conditions", default=None, help="optional video,condition sidecar")
    ev.add_argument("--video", default=None, help="video name for the conditions lookup")
    ev.add_argument("--json", action="store_true", help="print the report as JSON only")

    bench = sub.add_parser("bench", help="measure per-module latency and FPS")
    _add_common_run_flags(bench)
    bench.add_argument("--repeat", type=int, default=1, help="number of timing repetitions")

    synth = sub.add_parser("synth", help="generate a synthetic sequence with ground truth")
    synth.add_argument("--preset", choices=PRESET_NAMES, default="pan")
    synth.add_argument("--frames", type=int, default=120)
    synth.add_argument("--width", type=int, default=640)
    synth.add_argument("--height", type=int, default=360)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="output directory")

    return parser


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        detector=DetectorConfig(global_threshold=args.t0, local_threshold=args.t1),
        segmentation=SegmentationConfig(
            base_threshold=args.t2,
            light_gain=args.alpha,
            motion_gain=args.beta,
            merge_distance=args.d1,
        ),
        motion=MotionClassifierConfig(
            max_angle_variance=args.t3,
            max_speed_variance=args.t4,
            min_mean_speed=args.t5,
        ),
        lost_limit=args.lost_limit,
        region_base=args.region_base,
    )


def _make_detector(spec: str | None, timeout: float, seed: int):
    if spec is None or spec == "none":
        return None
    if spec.startswith("oracle:"):
        truth = load_ground_truth(spec.split(":", 1)[1])
        return OracleDetector(truth, seed=seed)
    return ProcessDetector(spec, timeout=timeout)

def _make_classifier(spec: str, timeout: float):
    if spec == "passthrough":
        return PassthroughClassifier()
    if spec.startswith("oracle:"):
        return OracleClassifier(load_ground_truth(spec.split(":", 1)[1]))
    return ProcessClassifier(spec, timeout=timeout)


def _frames(args):
    if args.input == "-":
        return seqio.read_raw_stream(sys.stdin.buffer)
    return seqio.read_image_dir(args.input)


def _cmd_run(args) -> int:
    config = _pipeline_config(args)
    detector = _make_detector(args.detector_cmd, args.backend_timeout, args.seed)
    classifier = _make_classifier(args.classifier_cmd, args.backend_timeout)
    pipeline = Pipeline(detector=detector, classifier=classifier, config=config)

    out_dir = Path(args.out) if args.out else None
    writer = None
    annotate_dir = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        run_config = {
            "input": args.input,
            "detector_cmd": args.detector_cmd,
            "classifier_cmd": args.classifier_cmd,
            "seed": args.seed,
            "parameters": dataclasses.asdict(config),
        }
        (out_dir / "run_config.json").write_text(json.dumps(run_config, indent=1))
        writer = seqio.JsonlWriter(out_dir / "detections.jsonl")
        if args.annotate:
            annotate_dir = out_dir / "annotated"
            annotate_dir.mkdir(exist_ok=True)

    frames_seen = 0
    try:
        for frame in _frames(args):
            result = pipeline.process_frame(frame)
            frames_seen += 1
            record = seqio.frame_result_to_json(result)
            if writer is not None:
                writer.write(record)
            else:
                print(json.dumps(record, separators=(",", ":")))
            if annotate_dir is not None:
                cv2.imwrite(
                    str(annotate_dir / f"{frame.index:06d}.png"),
                    seqio.annotate_frame(frame, result),
                )
    finally:
        if writer is not None:
            writer.close()
        pipeline.close()
    print(f"processed {frames_seen} frames", file=sys.stderr)
    return 0


def _load_log(path) -> dict[int, list[Detection]]:
    preds: dict[int, list[Detection]] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        record = json.loads(line)
        preds.setdefault(record["frame"], [])
        det = record.get("det")
        if det is not None:
            preds[record["frame"]].append(
                Detection(
                    box=BBox(det["x"], det["y"], det["w"], det["h"]),
                    confidence=det["conf"],
                    source=det["source"],
                )
            )
    return preds


def _cmd_eval(args) -> int:
    preds = _load_log(args.log)
    gts = load_ground_truth(args.gt)
    frames = sorted(set(preds) | set(gts))
    counts = [match_frame(preds.get(k, []), gts.get(k, [])) for k in frames]
    ap = average_precision_11pt(preds, gts)
    condition_counts = None
    condition_aps = None
    if args.conditions:
        table = load_conditions(args.conditions)
        video = args.video or Path(args.log).stem
        label = table.get(video)
        if label is not None:
            condition_counts = {label: counts}
            condition_aps = {label: ap}
    report = summarize(counts, ap, condition_counts, condition_aps)
    if args.json:
        print(json.dumps(report.to_dict(), indent=1))
        return 0
    rows = [
        ("tp", report.tp),
        ("fp", report.fp),
        ("fn", report.fn),
        ("precision", f"{report.precision:.4f}"),
        ("recall", f"{report.recall:.4f}"),
        ("fscore", f"{report.fscore:.4f}"),
        ("ap", f"{report.ap:.4f}"),
    ]
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")
    if report.conditions:
        for label, sub in report.conditions.items():
            print(
                f"[{label}] P={sub.precision:.4f} R={sub.recall:.4f} "
                f"F={sub.fscore:.4f} AP={sub.ap:.4f}"
            )
    print(json.dumps(report.to_dict(), separators=(",", ":")))
    return 0


def _cmd_bench(args) -> int:
    config = _pipeline_config(args)
    frames = list(_frames(args))
    if not frames:
        raise EmptyInputError("no frames to benchmark")
    runs = []
    for rep in range(max(args.repeat, 1)):
        detector = _make_detector(args.detector_cmd, args.backend_timeout, args.seed)
        classifier = _make_classifier(args.classifier_cmd, args.backend_timeout)
        pipeline = Pipeline(detector=detector, classifier=classifier, config=config)
        sums: dict[str, float] = {}
        samples: dict[str, int] = {}
        start = time.perf_counter()
        for frame in frames:
            result = pipeline.process_frame(frame)
            for tag in result.modules_run:
                sums[tag] = sums.get(tag, 0.0) + result.latency_ms[tag]
                samples[tag] = samples.get(tag, 0) + 1
        elapsed = time.perf_counter() - start
        pipeline.close()
        fps = len(frames) / elapsed if elapsed > 0 else 0.0
        runs.append((fps, sums, samples))
        print(f"run {rep + 1}: {len(frames)} frames in {elapsed:.3f}s = {fps:.2f} FPS")
        for tag in ("GAD", "GMD", "LAD", "LMD"):
            count = samples.get(tag, 0)
            mean = sums.get(tag, 0.0) / count if count else 0.0
            print(f"  {tag}: samples={count} mean={mean:.3f} ms")
    if len(runs) > 1:
        rates = [fps for fps, _, _ in runs]
        print(
            f"overall: mean={statistics.mean(rates):.2f} FPS "
            f"stddev={statistics.stdev(rates):.2f}"
        )
    return 0


def _cmd_synth(args) -> int:
    config = preset_scene(
        args.preset,
        frames=args.frames,
        seed=args.seed,
        width=args.width,
        height=args.height,
    )
    frames, truth = generate_scene(config)
    write_sequence(args.out, frames, truth)
    print(f"wrote {len(frames)} frames to {args.out}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "synth":
            return _cmd_synth(args)
    except EmptyInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MavdetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command!r}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
