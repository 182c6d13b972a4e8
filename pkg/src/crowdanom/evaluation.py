"""Frame-level ROC, AUC and EER plus ground-truth label loading."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import InputError


def _check_scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise InputError("scores and labels must be 1-D and the same length")
    if not np.isin(labels, (0, 1)).all():
        raise InputError("labels must be 0 or 1")
    if labels.sum() == 0 or labels.sum() == labels.size:
        raise InputError("labels contain a single class; ROC undefined")
    return scores, labels.astype(np.int64)


def roc(scores, labels) -> np.ndarray:
    """ROC points as rows (fpr, tpr, threshold).

    One point per distinct threshold, descending, where a frame is called
    anomalous when score >= threshold. A leading (0, 0, inf) anchor makes the
    curve start at the origin; the lowest threshold lands on (1, 1).
    """
    scores, labels = _check_scores_labels(scores, labels)
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    l = labels[order]
    tp = np.cumsum(l)
    fp = np.cumsum(1 - l)
    last = np.nonzero(np.diff(s, append=-np.inf))[0]  # last index of each distinct score
    points = [(0.0, 0.0, np.inf)]
    for i in last:
        points.append((fp[i] / n_neg, tp[i] / n_pos, s[i]))
    return np.array(points, dtype=np.float64)


def auc(points: np.ndarray) -> float:
    """Trapezoidal area under the (fpr, tpr) polyline."""
    pts = np.asarray(points, dtype=np.float64)
    x = pts[:, 0]
    y = pts[:, 1]
    return float(0.5 * ((x[1:] - x[:-1]) * (y[1:] + y[:-1])).sum())


def eer(points: np.ndarray) -> float:
    """Equal error rate: linear interpolation of where fpr crosses 1 - tpr."""
    pts = np.asarray(points, dtype=np.float64)
    g = pts[:, 0] + pts[:, 1] - 1.0  # monotone along the curve
    for i in range(len(g)):
        if g[i] == 0.0:
            return float(pts[i, 0])
        if g[i] > 0.0:
            g0, g1 = g[i - 1], g[i]
            t = -g0 / (g1 - g0)
            return float(pts[i - 1, 0] + t * (pts[i, 0] - pts[i - 1, 0]))
    raise InputError("curve never crosses the EER line")


@dataclass(frozen=True)
class Metrics:
    auc: float
    eer: float
    n_pos: int
    n_neg: int
    points: np.ndarray


def evaluate(scores, labels) -> Metrics:
    pts = roc(scores, labels)
    labels = np.asarray(labels)
    return Metrics(
        auc=auc(pts),
        eer=eer(pts),
        n_pos=int(labels.sum()),
        n_neg=int(labels.size - labels.sum()),
        points=pts,
    )


def load_labels(path, expected_length: Optional[int] = None) -> np.ndarray:
    """Read ``frame_index,label`` CSV (optional header) into a 0/1 array.

    Indices must cover 0..N-1 exactly; duplicates, gaps, malformed rows and
    out-of-range labels are errors.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError("labels file not found: %s" % path)
    pairs = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if lineno == 1 and line.replace(" ", "").lower() == "frame_index,label":
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise InputError("%s:%d: expected 'frame_index,label'" % (path, lineno))
        try:
            idx = int(parts[0])
            lab = int(parts[1])
        except ValueError:
            raise InputError("%s:%d: non-integer row %r" % (path, lineno, raw))
        if lab not in (0, 1):
            raise InputError("%s:%d: label must be 0 or 1, got %d" % (path, lineno, lab))
        if idx in pairs:
            raise InputError("%s:%d: duplicate frame index %d" % (path, lineno, idx))
        if idx < 0:
            raise InputError("%s:%d: negative frame index" % (path, lineno))
        pairs[idx] = lab
    if not pairs:
        raise InputError("%s: no label rows" % path)
    n = max(pairs) + 1
    missing = [i for i in range(n) if i not in pairs]
    if missing:
        raise InputError("%s: missing frame indices (first gap at %d)" % (path, missing[0]))
    if expected_length is not None and n != expected_length:
        raise InputError(
            "%s: %d labels for a %d-frame sequence" % (path, n, expected_length)
        )
    return np.array([pairs[i] for i in range(n)], dtype=np.int64)
