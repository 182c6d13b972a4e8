"""Command line entry points: detection runs and synthetic scene generation."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import synth
from .core import InputError, PipelineConfig, PipelineError, load_sequence
from .evaluation import load_labels
from .pipeline import DUMP_KINDS, bench_text, run_pipeline, write_outputs


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdanom",
        description="Score a frame directory for crowd motion anomalies.",
    )
    parser.add_argument("--input", required=True, help="directory of image frames")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--config", help="key=value config file overriding defaults")
    parser.add_argument("--labels", help="frame_index,label CSV of ground truth")
    parser.add_argument(
        "--dump",
        help="comma separated debug artifacts to write: %s" % ",".join(DUMP_KINDS),
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=0,
        help="recorded in the manifest; the pipeline itself is deterministic",
    )
    parser.add_argument(
        "--bench",
        action="store_true",
        help="print a per-stage timing table and write bench.txt",
    )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
        seq = load_sequence(args.input)
        labels = None
        if args.labels:
            labels = load_labels(args.labels, expected_length=len(seq))
        dumps = []
        if args.dump:
            dumps = [k.strip() for k in args.dump.split(",") if k.strip()]
        result = run_pipeline(seq, cfg, labels=labels, dumps=dumps, out_dir=args.out)
    except (PipelineError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2

    manifest_extra = {
        "input": str(Path(args.input).resolve()),
        "seed": str(args.seed),
    }
    if args.config:
        manifest_extra["config_file"] = str(Path(args.config).resolve())
    if args.labels:
        manifest_extra["labels_file"] = str(Path(args.labels).resolve())
    written = write_outputs(result, args.out, manifest_extra, bench=args.bench)

    if args.bench:
        print(bench_text(result), end="")
    n_flagged = int(result.flags[result.config.warmup_frames :].sum())
    print("scored %d frames, flagged %d" % (result.n_frames, n_flagged))
    if result.metrics is not None:
        print("auc = %.6f  eer = %.6f" % (result.metrics.auc, result.metrics.eer))
    print("wrote %s" % written["scores"])
    return 0


def _build_synth_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdanom-synth",
        description="Render a deterministic synthetic scene to image frames.",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument(
        "--preset",
        choices=sorted(synth.PRESETS),
        help="built in scene",
    )
    source.add_argument("--script", help="scene script file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--length",
        type=int,
        help="override the script frame count",
    )
    return parser


def synth_main(argv=None) -> int:
    args = _build_synth_parser().parse_args(argv)
    try:
        if args.preset:
            script = synth.PRESETS[args.preset]()
        else:
            script = synth.parse_script(args.script)
        scene = synth.render(script, length=args.length)
    except (PipelineError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2

    out_dir = Path(args.out)
    frames_dir = out_dir / "frames"
    synth.write_frames(scene.frames, frames_dir)
    synth.write_labels(scene.labels, out_dir / "labels.csv")
    (out_dir / "script.txt").write_text(synth.format_script(script))
    tracks_lines = ["frame_index,actor,x,y,w,h"]
    for a, track in enumerate(scene.tracks):
        for t in range(track.shape[0]):
            x, y, w, h = (int(v) for v in track[t])
            tracks_lines.append("%d,%d,%d,%d,%d,%d" % (t, a, x, y, w, h))
    (out_dir / "tracks.csv").write_text("\n".join(tracks_lines) + "\n")

    n_anom = int(np.sum(scene.labels))
    print(
        "rendered %d frames (%d anomalous) to %s"
        % (len(scene.frames), n_anom, frames_dir)
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
