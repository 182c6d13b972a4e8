"""Edge-fused segmentation of foreground masks and pedestrian box proposals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .background import ForegroundMask
from .core import BoundingBox, Frame, InputError, PipelineConfig

# pedestrian-band proposal grid, centered on segment centroids
PROPOSAL_SCALES = (0.8, 1.0, 1.25)
PROPOSAL_ASPECTS = (0.33, 0.41, 0.49)

_STRUCT3 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Segment:
    """8-connected foreground component left after edge subtraction."""

    rows: np.ndarray
    cols: np.ndarray
    centroid: Tuple[float, float]  # (x, y)
    extent: BoundingBox

    @property
    def area(self) -> int:
        return int(self.rows.size)


@dataclass(frozen=True)
class Proposal:
    """Candidate pedestrian box with its gating statistics."""

    box: BoundingBox
    phi: float  # foreground fraction inside the box
    psi: float  # normalized intensity entropy of the patch


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Otsu's threshold over a histogram of ``values`` (maximizes between-class variance)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    lo = float(values.min())
    hi = float(values.max())
    if hi <= lo:
        return hi
    hist, edges = np.histogram(values, bins=bins, range=(lo, hi))
    p = hist.astype(np.float64) / values.size
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(p)
    m = np.cumsum(p * centers)
    m_total = m[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (m_total * w0 - m) ** 2 / (w0 * (1.0 - w0))
    between[~np.isfinite(between)] = -1.0
    k = int(np.argmax(between))
    return float(edges[k + 1])


def patch_entropy(patch: np.ndarray) -> float:
    """Shannon entropy of the 256-bin intensity histogram, normalized by 8 bits."""
    patch = np.asarray(patch)
    if patch.size == 0:
        raise InputError("empty patch")
    hist = np.bincount(patch.ravel().astype(np.int64), minlength=256)
    p = hist[hist > 0] / patch.size
    return float(-(p * np.log2(p)).sum() / 8.0)


def edge_fused_segment(
    mask: ForegroundMask, frame: Frame, min_segment_area: int = 16
) -> List[Segment]:
    """Split the cleaned mask along intensity edges into per-object segments.

    Sobel magnitude is thresholded at its Otsu level, dilated by 3x3, and
    subtracted from the mask; the 8-connected components that remain (and meet
    ``min_segment_area``) become segments.
    """
    if (mask.height, mask.width) != (frame.height, frame.width):
        raise InputError("mask and frame dims differ")
    img = frame.data.astype(np.float64)
    gx = ndimage.sobel(img, axis=1)
    gy = ndimage.sobel(img, axis=0)
    mag = np.hypot(gx, gy)
    edges = mag > otsu_threshold(mag)
    barrier = ndimage.binary_dilation(edges, structure=_STRUCT3)
    residual = mask.bits & ~barrier
    labeled, n = ndimage.label(residual, structure=_STRUCT3)
    segments = []
    for lab in range(1, n + 1):
        rows, cols = np.nonzero(labeled == lab)
        if rows.size < min_segment_area:
            continue
        x0, x1 = int(cols.min()), int(cols.max())
        y0, y1 = int(rows.min()), int(rows.max())
        segments.append(
            Segment(
                rows=rows,
                cols=cols,
                centroid=(float(cols.mean()), float(rows.mean())),
                extent=BoundingBox(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
            )
        )
    return segments


def _centered_box(
    cx: float, cy: float, w: int, h: int, frame_w: int, frame_h: int
) -> Optional[BoundingBox]:
    if w < 4 or h < 4:
        return None
    w = min(w, frame_w)
    h = min(h, frame_h)
    box = BoundingBox(int(round(cx - w / 2.0)), int(round(cy - h / 2.0)), w, h)
    return box.clamped(frame_w, frame_h)


def generate_proposals(
    segments: List[Segment],
    frame: Frame,
    mask: ForegroundMask,
    cfg: PipelineConfig,
) -> List[Proposal]:
    """Pedestrian-band boxes around segment centroids, gated by phi and psi.

    Three scales of the segment extent by three aspect ratios, so at most nine
    boxes per segment. A box survives when its foreground fraction exceeds
    cfg.min_foreground_fraction, its normalized patch entropy exceeds
    cfg.min_entropy and its aspect stays in [cfg.aspect_min, cfg.aspect_max].
    """
    out: List[Proposal] = []
    seen = set()
    for seg in segments:
        cx, cy = seg.centroid
        for scale in PROPOSAL_SCALES:
            h = int(round(seg.extent.h * scale))
            for aspect in PROPOSAL_ASPECTS:
                box = _centered_box(cx, cy, int(round(h * aspect)), h, frame.width, frame.height)
                if box is None:
                    continue
                if not cfg.aspect_min <= box.aspect <= cfg.aspect_max:
                    continue
                key = (box.x, box.y, box.w, box.h)
                if key in seen:
                    continue
                seen.add(key)
                sub_mask = mask.bits[box.y : box.bottom, box.x : box.right]
                phi = float(sub_mask.mean())
                psi = patch_entropy(frame.data[box.y : box.bottom, box.x : box.right])
                if phi > cfg.min_foreground_fraction and psi > cfg.min_entropy:
                    out.append(Proposal(box=box, phi=phi, psi=psi))
    return out
