"""Flow-histogram descriptors linking each observer to its nearest neighbors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import BoundingBox, InputError, PipelineConfig
from .motionfield import ModulatedFlowField, motion_energy

_MAG_EPS = 1e-6


@dataclass(frozen=True)
class OrientationHistogram:
    """Magnitude-weighted histogram over flow directions."""

    bins: np.ndarray

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.float64)
        if bins.ndim != 1 or bins.size < 1:
            raise InputError("histogram must be a non-empty 1-D array")
        object.__setattr__(self, "bins", bins)

    @property
    def n_bins(self) -> int:
        return int(self.bins.size)


@dataclass(frozen=True)
class LocalDescriptor:
    """One observer's neighborhood signature: link weights and motion stats.

    ``features`` is 4 x M; column k holds (max, min, mean, var) of motion
    energy inside neighbor k's box. ``weights`` sums to 1.
    """

    observer_id: int
    weights: np.ndarray
    features: np.ndarray
    neighbor_ids: Tuple[int, ...]


def hmof(mof: ModulatedFlowField, box: BoundingBox, n_bins: int) -> OrientationHistogram:
    """Histogram of modulated flow orientations inside ``box``.

    Each pixel with magnitude > 1e-6 adds its magnitude to the bin holding its
    direction; [0, 2pi) is split into n_bins equal sectors.
    """
    h, w = mof.u.shape
    if not box.is_inside(w, h):
        raise InputError("box %r outside %dx%d field" % (box, w, h))
    u = mof.u[box.y : box.bottom, box.x : box.right].ravel()
    v = mof.v[box.y : box.bottom, box.x : box.right].ravel()
    mag = np.hypot(u, v)
    keep = mag > _MAG_EPS
    bins = np.zeros(n_bins)
    if keep.any():
        ang = np.arctan2(v[keep], u[keep]) % (2.0 * np.pi)
        idx = np.minimum((ang / (2.0 * np.pi / n_bins)).astype(np.int64), n_bins - 1)
        bins = np.bincount(idx, weights=mag[keep], minlength=n_bins).astype(np.float64)
    return OrientationHistogram(bins=bins)


def shift_center_max(hist: OrientationHistogram) -> OrientationHistogram:
    """Rotate the histogram so its peak sits at index n_bins // 2.

    Ties pick the lowest original index; applying the shift twice is a no-op.
    """
    center = hist.n_bins // 2
    peak = int(np.argmax(hist.bins))
    return OrientationHistogram(bins=np.roll(hist.bins, center - peak))


def select_shmof(hist: OrientationHistogram, span: float) -> OrientationHistogram:
    """Window of w = max(1, round(span * n_bins)) bins around the center.

    Even windows extend one extra bin to the right; span = 1 returns the full
    histogram unchanged.
    """
    if not 0.0 <= span <= 1.0:
        raise ValueError("span must be in [0, 1]")
    n = hist.n_bins
    w = max(1, int(round(span * n)))
    if w >= n:
        return OrientationHistogram(bins=hist.bins.copy())
    center = n // 2
    start = center - (w - 1) // 2
    idx = (start + np.arange(w)) % n
    return OrientationHistogram(bins=hist.bins[idx])


def chi2(a, b) -> float:
    """Chi-squared histogram distance 0.5 * sum (a-b)^2 / (a+b); 0/0 terms are 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("histograms must have the same shape")
    if (a < 0).any() or (b < 0).any():
        raise ValueError("histogram bins must be non-negative")
    den = a + b
    num = (a - b) ** 2
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(0.5 * terms.sum())


def nearest_neighbors(
    observer_id: int, centroids: Dict[int, Tuple[float, float]], m: int
) -> List[int]:
    """Up to m other observers closest by box centroid; distance ties pick lower ids."""
    cx, cy = centroids[observer_id]
    others = []
    for pid, (px, py) in centroids.items():
        if pid == observer_id:
            continue
        others.append((np.hypot(px - cx, py - cy), pid))
    others.sort()
    return [pid for _, pid in others[:m]]


def linking_weights(dh: np.ndarray) -> np.ndarray:
    """Normalized squared histogram differences; all-zero input gives uniform weights."""
    dh = np.asarray(dh, dtype=np.float64)
    if dh.size == 0:
        raise ValueError("need at least one neighbor difference")
    sq = dh * dh
    total = sq.sum()
    if total == 0.0:
        return np.full(dh.size, 1.0 / dh.size)
    return sq / total


def _observer_shmof(
    mof: ModulatedFlowField, box: BoundingBox, cfg: PipelineConfig
) -> np.ndarray:
    return select_shmof(
        shift_center_max(hmof(mof, box, cfg.orientation_bins)), cfg.histogram_span
    ).bins


def build_descriptors(
    observers: Sequence[Tuple[int, BoundingBox]],
    mof: ModulatedFlowField,
    cfg: PipelineConfig,
) -> Dict[int, LocalDescriptor]:
    """Descriptors for every observer with at least one neighbor this frame."""
    shmofs = {}
    energies = {}
    centroids = {}
    for pid, box in observers:
        shmofs[pid] = _observer_shmof(mof, box, cfg)
        energies[pid] = motion_energy(mof, box)
        centroids[pid] = box.center
    out: Dict[int, LocalDescriptor] = {}
    for pid, box in observers:
        nbrs = nearest_neighbors(pid, centroids, cfg.neighbor_count)
        if not nbrs:
            continue
        dh = np.array([chi2(shmofs[pid], shmofs[k]) for k in nbrs])
        out[pid] = LocalDescriptor(
            observer_id=pid,
            weights=linking_weights(dh),
            features=np.column_stack([energies[k] for k in nbrs]),
            neighbor_ids=tuple(nbrs),
        )
    return out


def build_descriptor(
    observer_id: int,
    observers: Sequence[Tuple[int, BoundingBox]],
    mof: ModulatedFlowField,
    cfg: PipelineConfig,
) -> Optional[LocalDescriptor]:
    """Descriptor for one observer, or None when it has no neighbors."""
    return build_descriptors(observers, mof, cfg).get(observer_id)
