"""Earth mover's distance between descriptor signatures and frame scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .descriptors import LocalDescriptor

MAX_SIGNATURE_POINTS = 16


@dataclass(frozen=True)
class Signature:
    """Weighted point set: ``weights`` (m,) over ``features`` (m, 4)."""

    weights: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        f = np.asarray(self.features, dtype=np.float64)
        if w.ndim != 1 or f.ndim != 2 or f.shape[0] != w.size:
            raise ValueError("weights (m,) must match features (m, d)")
        if w.size == 0 or w.size > MAX_SIGNATURE_POINTS:
            raise ValueError("signature needs 1..%d points" % MAX_SIGNATURE_POINTS)
        if (w < 0).any() or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive total")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "features", f)


def descriptor_signature(d: LocalDescriptor) -> Signature:
    return Signature(weights=d.weights, features=d.features.T)


def _min_cost_transport(supply: np.ndarray, demand: np.ndarray, cost: np.ndarray) -> float:
    """Exact min-cost transport by successive shortest augmenting paths.

    Bellman-Ford runs over the bipartite residual graph; augmenting along
    shortest paths keeps the flow optimal for the mass shipped so far, so the
    final flow solves the transportation LP. Parent pointers cannot cycle
    because every relaxation is a strict improvement.
    """
    m, n = cost.shape
    flow = np.zeros((m, n))
    ra = supply.astype(np.float64).copy()
    rb = demand.astype(np.float64).copy()
    eps = 1e-12
    rows = np.arange(m)
    cols = np.arange(n)
    guard = 4 * (m + n) * (m + n) + 16
    while True:
        if not (ra > eps).any():
            break
        guard -= 1
        if guard <= 0:
            raise RuntimeError("transport solver failed to converge")
        ds = np.where(ra > eps, 0.0, np.inf)
        dt = np.full(n, np.inf)
        parent_sink = np.full(n, -1, dtype=np.int64)  # best source feeding each sink
        parent_src = np.full(m, -1, dtype=np.int64)  # sink behind each source, -1 = origin
        for _ in range(m + n + 1):
            changed = False
            cand = ds[:, None] + cost
            best_i = np.argmin(cand, axis=0)
            best_val = cand[best_i, cols]
            upd = best_val < dt - 1e-15
            if upd.any():
                dt[upd] = best_val[upd]
                parent_sink[upd] = best_i[upd]
                changed = True
            back = np.where(flow > eps, dt[None, :] - cost, np.inf)
            best_j = np.argmin(back, axis=1)
            back_val = back[rows, best_j]
            upd2 = back_val < ds - 1e-15
            if upd2.any():
                ds[upd2] = back_val[upd2]
                parent_src[upd2] = best_j[upd2]
                changed = True
            if not changed:
                break
        reach = np.where(rb > eps, dt, np.inf)
        j = int(np.argmin(reach))
        if not np.isfinite(reach[j]):
            raise RuntimeError("transport network disconnected")
        # walk back to an origin source, collecting the bottleneck
        path = []
        bottleneck = rb[j]
        jj = j
        while True:
            i = int(parent_sink[jj])
            path.append((i, jj, 1.0))
            if parent_src[i] < 0:
                bottleneck = min(bottleneck, ra[i])
                origin = i
                break
            j2 = int(parent_src[i])
            path.append((i, j2, -1.0))
            bottleneck = min(bottleneck, flow[i, j2])
            jj = j2
            if len(path) > 2 * (m + n) + 2:
                raise RuntimeError("transport path reconstruction looped")
        for i, jj2, sgn in path:
            flow[i, jj2] += sgn * bottleneck
        ra[origin] -= bottleneck
        rb[j] -= bottleneck
    return float((flow * cost).sum())


def emd(a: Signature, b: Signature) -> float:
    """Exact earth mover's distance with Euclidean ground distance.

    Both signatures are normalized to unit total mass first, so the value is
    the optimal transportation cost between two distributions.
    """
    wa = a.weights / a.weights.sum()
    wb = b.weights / b.weights.sum()
    cost = cdist(a.features, b.features)
    return _min_cost_transport(wa, wb, cost)


def frame_abnormality_raw(
    prev: Dict[int, LocalDescriptor], curr: Dict[int, LocalDescriptor]
) -> Tuple[float, int]:
    """Mean EMD over pool ids observed in both frames, plus how many there were.

    No common observers means no evidence, scored 0 (low confidence).
    """
    common = sorted(set(prev) & set(curr))
    if not common:
        return 0.0, 0
    values = [
        emd(descriptor_signature(prev[k]), descriptor_signature(curr[k])) for k in common
    ]
    return float(np.mean(values)), len(common)


def filter_weights(n: int) -> np.ndarray:
    """Length 2n+1 smoothing taps: center 1/(n+1), off-center 1/(2(n+1))."""
    if n < 0:
        raise ValueError("n must be >= 0")
    w = np.full(2 * n + 1, 1.0 / (2.0 * (n + 1)))
    w[n] = 1.0 / (n + 1.0)
    return w


def smooth(series: np.ndarray, n: int) -> np.ndarray:
    """Weighted moving average with symmetric reflection padding at the ends."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1:
        raise ValueError("series must be 1-D")
    if n == 0 or series.size == 0:
        return series.copy()
    padded = np.pad(series, n, mode="symmetric")
    return np.convolve(padded, filter_weights(n), mode="valid")


@dataclass(frozen=True)
class ClassificationResult:
    flags: np.ndarray  # True where anomalous
    normalized: np.ndarray
    score_min: float
    score_max: float


def classify(series: np.ndarray, threshold: float) -> ClassificationResult:
    """Min-max normalize over the whole series and flag values above threshold.

    A constant series has no spread to judge by, so everything stays normal.
    """
    series = np.asarray(series, dtype=np.float64)
    lo = float(series.min())
    hi = float(series.max())
    if hi <= lo:
        norm = np.zeros_like(series)
    else:
        norm = (series - lo) / (hi - lo)
    return ClassificationResult(
        flags=norm > threshold, normalized=norm, score_min=lo, score_max=hi
    )
