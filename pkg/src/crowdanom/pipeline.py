"""Frame loop wiring all stages together, plus result serialization."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from . import evaluation, scoring
from .association import PoolManager
from .background import BackgroundModel, cleanup
from .core import FrameSequence, InputError, PipelineConfig
from .descriptors import build_descriptors
from .motionfield import compute_flow, compute_saliency, compute_tau, modulate
from .proposals import edge_fused_segment, generate_proposals

STAGES = (
    "background",
    "segmentation",
    "proposals",
    "association",
    "flow",
    "saliency",
    "descriptors",
    "scoring",
)

DUMP_KINDS = ("masks", "flow", "pools", "descriptors")


@dataclass(frozen=True)
class PoolSnapshot:
    pool_id: int
    n_templates: int
    box: Tuple[int, int, int, int]


@dataclass
class FrameRecord:
    index: int
    n_segments: int = 0
    n_proposals: int = 0
    n_observers: int = 0
    n_common: int = 0
    xi_hat: float = 0.0
    created_ids: Tuple[int, ...] = ()
    pruned_ids: Tuple[int, ...] = ()
    observers: Tuple[Tuple[int, Tuple[int, int, int, int]], ...] = ()
    pools: Tuple[PoolSnapshot, ...] = ()


@dataclass
class PipelineResult:
    config: PipelineConfig
    fa_raw: np.ndarray
    fa_smoothed: np.ndarray
    normalized: np.ndarray
    flags: np.ndarray
    records: List[FrameRecord]
    stage_seconds: Dict[str, float]
    total_seconds: float
    labels: Optional[np.ndarray] = None
    metrics: Optional[evaluation.Metrics] = None

    @property
    def n_frames(self) -> int:
        return len(self.fa_raw)


class _Dumper:
    """Writes optional per-frame debug artifacts while the loop runs."""

    def __init__(self, out_dir: Path, kinds: Sequence[str]):
        self.kinds = set(kinds)
        unknown = self.kinds - set(DUMP_KINDS)
        if unknown:
            raise InputError("unknown dump kinds: %s" % sorted(unknown))
        self.out_dir = out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        for kind in ("masks", "flow"):
            if kind in self.kinds:
                (out_dir / kind).mkdir(parents=True, exist_ok=True)
        self.pool_rows: List[str] = []
        self.desc_rows: List[str] = []

    def mask(self, t: int, bits: np.ndarray):
        if "masks" in self.kinds:
            img = Image.fromarray((bits * np.uint8(255)), mode="L")
            img.save(self.out_dir / "masks" / ("mask_%05d.pgm" % t))

    def flow(self, t: int, u: np.ndarray, v: np.ndarray):
        if "flow" in self.kinds:
            raw = np.stack([u, v]).astype("<f4").tobytes()
            (self.out_dir / "flow" / ("flow_%05d.bin" % t)).write_bytes(raw)

    def pools(self, record: FrameRecord):
        if "pools" in self.kinds:
            for snap in record.pools:
                x, y, w, h = snap.box
                self.pool_rows.append(
                    "%d,%d,%d,%d,%d,%d,%d"
                    % (record.index, snap.pool_id, snap.n_templates, x, y, w, h)
                )

    def descriptors(self, t: int, descs):
        if "descriptors" in self.kinds:
            for pid in sorted(descs):
                d = descs[pid]
                self.desc_rows.append(
                    "%d,%d,%s,%s,%s"
                    % (
                        t,
                        pid,
                        ";".join(str(k) for k in d.neighbor_ids),
                        ";".join("%.9g" % w for w in d.weights),
                        ";".join("%.9g" % f for f in d.features.ravel()),
                    )
                )

    def finish(self):
        if "pools" in self.kinds:
            header = "frame_index,pool_id,n_templates,x,y,w,h"
            (self.out_dir / "pools.csv").write_text(
                "\n".join([header] + self.pool_rows) + "\n"
            )
        if "descriptors" in self.kinds:
            header = "frame_index,observer_id,neighbor_ids,weights,features"
            (self.out_dir / "descriptors.csv").write_text(
                "\n".join([header] + self.desc_rows) + "\n"
            )


def run_pipeline(
    seq: FrameSequence,
    cfg: Optional[PipelineConfig] = None,
    labels: Optional[np.ndarray] = None,
    dumps: Sequence[str] = (),
    out_dir=None,
) -> PipelineResult:
    """Run detection over ``seq`` and score every frame.

    Labels, when given, must cover the sequence; metrics are computed over
    post-warmup frames only. ``dumps`` writes per-frame debug artifacts under
    ``out_dir``.
    """
    cfg = cfg or PipelineConfig()
    if labels is not None and len(labels) != len(seq):
        raise InputError(
            "%d labels for a %d-frame sequence" % (len(labels), len(seq))
        )
    dumper = None
    if dumps:
        if out_dir is None:
            raise InputError("dumps requested but no out_dir given")
        dumper = _Dumper(Path(out_dir), dumps)

    bg = BackgroundModel(
        seq.height,
        seq.width,
        n_components=cfg.gmm_components,
        learning_rate=cfg.gmm_learning_rate,
        match_sigma=cfg.gmm_match_sigma,
        background_ratio=cfg.gmm_background_ratio,
        initial_variance=cfg.gmm_initial_variance,
        variance_floor=cfg.gmm_variance_floor,
    )
    pools = PoolManager(cfg)
    stage_seconds = {name: 0.0 for name in STAGES}
    records: List[FrameRecord] = []
    fa_raw = np.zeros(len(seq))
    prev_descriptors: Dict = {}
    window: List = []

    t_start = time.perf_counter()
    for t, frame in enumerate(seq):
        record = FrameRecord(index=t)
        window.append(frame)
        if len(window) > 3:
            window.pop(0)

        tick = time.perf_counter()
        mask = cleanup(bg.update_and_classify(frame))
        stage_seconds["background"] += time.perf_counter() - tick
        if dumper:
            dumper.mask(t, mask.bits)

        tick = time.perf_counter()
        segments = edge_fused_segment(mask, frame, cfg.min_segment_area)
        stage_seconds["segmentation"] += time.perf_counter() - tick

        tick = time.perf_counter()
        props = generate_proposals(segments, frame, mask, cfg)
        stage_seconds["proposals"] += time.perf_counter() - tick

        tick = time.perf_counter()
        assoc = pools.associate(frame, props, t)
        stage_seconds["association"] += time.perf_counter() - tick

        descriptors: Dict = {}
        if t > 0:
            tick = time.perf_counter()
            flow = compute_flow(
                window[-2],
                frame,
                levels=cfg.flow_levels,
                iterations=cfg.flow_iterations,
                smoothness=cfg.flow_smoothness,
            )
            stage_seconds["flow"] += time.perf_counter() - tick
            if dumper:
                dumper.flow(t, flow.u, flow.v)

            tick = time.perf_counter()
            saliency = compute_saliency(window, cfg.saliency_sigma)
            tau = compute_tau(saliency, cfg.saliency_mass)
            mof = modulate(flow, saliency, tau)
            stage_seconds["saliency"] += time.perf_counter() - tick

            tick = time.perf_counter()
            if assoc.observers:
                boxes = [(pid, p.box) for pid, p in assoc.observers]
                descriptors = build_descriptors(boxes, mof, cfg)
            stage_seconds["descriptors"] += time.perf_counter() - tick

        tick = time.perf_counter()
        fa_raw[t], n_common = scoring.frame_abnormality_raw(prev_descriptors, descriptors)
        stage_seconds["scoring"] += time.perf_counter() - tick
        prev_descriptors = descriptors

        record.n_segments = len(segments)
        record.n_proposals = len(props)
        record.n_observers = len(assoc.observers)
        record.n_common = n_common
        record.xi_hat = assoc.xi_hat
        record.created_ids = assoc.created_ids
        record.pruned_ids = assoc.pruned_ids
        record.observers = tuple(
            (pid, (p.box.x, p.box.y, p.box.w, p.box.h)) for pid, p in assoc.observers
        )
        record.pools = tuple(
            PoolSnapshot(
                pool_id=pid,
                n_templates=len(pool.templates),
                box=(pool.last_box.x, pool.last_box.y, pool.last_box.w, pool.last_box.h),
            )
            for pid, pool in sorted(pools.pools.items())
        )
        records.append(record)
        if dumper:
            dumper.pools(record)
            dumper.descriptors(t, descriptors)
    total_seconds = time.perf_counter() - t_start

    fa_smoothed = scoring.smooth(fa_raw, cfg.smooth_half_len)
    cls = scoring.classify(fa_smoothed, cfg.anomaly_threshold)

    metrics = None
    if labels is not None:
        w = cfg.warmup_frames
        if w < len(seq):
            tail_scores = fa_smoothed[w:]
            tail_labels = np.asarray(labels)[w:]
            if 0 < tail_labels.sum() < tail_labels.size:
                metrics = evaluation.evaluate(tail_scores, tail_labels)

    if dumper:
        dumper.finish()
    return PipelineResult(
        config=cfg,
        fa_raw=fa_raw,
        fa_smoothed=fa_smoothed,
        normalized=cls.normalized,
        flags=cls.flags,
        records=records,
        stage_seconds=stage_seconds,
        total_seconds=total_seconds,
        labels=None if labels is None else np.asarray(labels),
        metrics=metrics,
    )


def scores_csv_text(result: PipelineResult) -> str:
    """Deterministic CSV of per-frame scores (the byte-stability contract)."""
    warmup = result.config.warmup_frames
    lines = ["frame_index,fa_raw,fa_smoothed,normalized,flag,n_observers,in_warmup"]
    for t in range(result.n_frames):
        lines.append(
            "%d,%.9g,%.9g,%.9g,%d,%d,%d"
            % (
                t,
                result.fa_raw[t],
                result.fa_smoothed[t],
                result.normalized[t],
                int(result.flags[t]) if t >= warmup else 0,
                result.records[t].n_observers,
                int(t < warmup),
            )
        )
    return "\n".join(lines) + "\n"


def metrics_text(result: PipelineResult) -> str:
    warmup = result.config.warmup_frames
    lines = [
        "frames_total = %d" % result.n_frames,
        "warmup_frames = %d" % warmup,
        "frames_scored = %d" % max(0, result.n_frames - warmup),
    ]
    if result.metrics is None:
        lines.append("metrics = unavailable (no usable labels)")
    else:
        m = result.metrics
        lines += [
            "positives = %d" % m.n_pos,
            "negatives = %d" % m.n_neg,
            "auc = %.9g" % m.auc,
            "eer = %.9g" % m.eer,
        ]
    return "\n".join(lines) + "\n"


def roc_csv_text(result: PipelineResult) -> Optional[str]:
    if result.metrics is None:
        return None
    lines = ["fpr,tpr,threshold"]
    for fpr, tpr, thr in result.metrics.points:
        lines.append("%.9g,%.9g,%.9g" % (fpr, tpr, thr))
    return "\n".join(lines) + "\n"


def bench_rows(result: PipelineResult) -> List[Tuple[str, float, float]]:
    """(stage, total seconds, ms per frame) rows plus the overall total."""
    rows = []
    for name in STAGES:
        sec = result.stage_seconds[name]
        rows.append((name, sec, 1000.0 * sec / result.n_frames))
    rows.append(("total", result.total_seconds, 1000.0 * result.total_seconds / result.n_frames))
    return rows


def bench_text(result: PipelineResult) -> str:
    lines = ["%-14s %10s %12s" % ("stage", "seconds", "ms/frame")]
    for name, sec, ms in bench_rows(result):
        lines.append("%-14s %10.3f %12.3f" % (name, sec, ms))
    return "\n".join(lines) + "\n"


def write_outputs(
    result: PipelineResult,
    out_dir,
    manifest_extra: Optional[Dict[str, str]] = None,
    bench: bool = False,
) -> Dict[str, Path]:
    """Write scores.csv, metrics.txt, roc.csv (when labels exist) and manifest.txt."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}

    scores_path = out_dir / "scores.csv"
    scores_path.write_text(scores_csv_text(result))
    written["scores"] = scores_path

    metrics_path = out_dir / "metrics.txt"
    metrics_path.write_text(metrics_text(result))
    written["metrics"] = metrics_path

    roc_text = roc_csv_text(result)
    if roc_text is not None:
        roc_path = out_dir / "roc.csv"
        roc_path.write_text(roc_text)
        written["roc"] = roc_path

    manifest_lines = []
    for key, value in (manifest_extra or {}).items():
        manifest_lines.append("%s = %s" % (key, value))
    manifest_lines.append("frames = %d" % result.n_frames)
    for name, sec, ms in bench_rows(result):
        manifest_lines.append("stage_ms_per_frame_%s = %.3f" % (name, ms))
    manifest_lines.append("")
    manifest_lines.append("# effective configuration")
    manifest_lines.append(result.config.as_text())
    manifest_path = out_dir / "manifest.txt"
    manifest_path.write_text("\n".join(manifest_lines))
    written["manifest"] = manifest_path

    if bench:
        bench_path = out_dir / "bench.txt"
        bench_path.write_text(bench_text(result))
        written["bench"] = bench_path
    return written
