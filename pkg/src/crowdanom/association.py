"""Template pools with low-frequency 3D-DCT appearance matching.

Each tracked object keeps a short stack of canonical-size intensity templates.
A candidate patch is scored by appending it to the stack, reconstructing the
volume from its low-frequency DCT coefficients, and turning the reconstruction
error of the appended slice into a likelihood exp(-err^2 / (2 xi)). The scale
xi is re-fit every frame by maximizing the spread of sigmoid-squashed
likelihoods over each pool's candidate set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as spfft

from .core import BoundingBox, Frame, PipelineConfig, crop_resize
from .proposals import Proposal

# log-spaced search grid for the likelihood scale, 10^-3 .. 10^1 in 0.25 steps
XI_GRID = tuple(float(10.0 ** e) for e in np.arange(-3.0, 1.0 + 1e-9, 0.25))
INITIAL_XI = 0.1


def dct3(volume: np.ndarray) -> np.ndarray:
    """Orthonormal type-II DCT along all three axes."""
    volume = np.asarray(volume, dtype=np.float64)
    if volume.ndim != 3:
        raise ValueError("expected a 3-D volume, got shape %r" % (volume.shape,))
    return spfft.dctn(volume, type=2, norm="ortho")


def idct3(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of dct3 (orthonormal type-III DCT along all three axes)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 3:
        raise ValueError("expected a 3-D volume, got shape %r" % (coeffs.shape,))
    return spfft.idctn(coeffs, type=2, norm="ortho")


def low_freq_reconstruct(volume: np.ndarray, cutoff: float) -> np.ndarray:
    """Reconstruction of ``volume`` keeping only low-frequency coefficients.

    Along each axis of length L, coefficients with index >= ceil(cutoff * L)
    are zeroed. cutoff = 1 keeps everything and reproduces the input.
    """
    if not 0.0 < cutoff <= 1.0:
        raise ValueError("cutoff must be in (0, 1]")
    coeffs = dct3(volume)
    for axis, length in enumerate(coeffs.shape):
        keep = math.ceil(cutoff * length)
        if keep < length:
            sl = [slice(None)] * 3
            sl[axis] = slice(keep, None)
            coeffs[tuple(sl)] = 0.0
    return idct3(coeffs)


@dataclass
class TemplatePool:
    """Ordered template stack for one tracked object."""

    pool_id: int
    templates: List[np.ndarray]  # each uint8 (template_h, template_w)
    last_box: BoundingBox
    last_associated_frame: int

    def __len__(self) -> int:
        return len(self.templates)

    def volume(self) -> np.ndarray:
        """(H, W, D) float64 stack in [0, 1], template d at [:, :, d]."""
        return np.stack(self.templates, axis=2).astype(np.float64) / 255.0


def low_freq_approx(pool: TemplatePool, candidate: np.ndarray, cutoff: float) -> np.ndarray:
    """Low-frequency reconstruction of the candidate slice appended to the pool."""
    cand = np.asarray(candidate, dtype=np.float64)
    if cand.max() > 1.0:
        cand = cand / 255.0
    volume = np.concatenate([pool.volume(), cand[:, :, None]], axis=2)
    return low_freq_reconstruct(volume, cutoff)[:, :, -1]


def reconstruction_error(pool: TemplatePool, candidate: np.ndarray, cutoff: float) -> float:
    """Squared error between the candidate slice and its low-frequency reconstruction."""
    cand = np.asarray(candidate, dtype=np.float64)
    if cand.max() > 1.0:
        cand = cand / 255.0
    approx = low_freq_approx(pool, cand, cutoff)
    return float(((cand - approx) ** 2).sum())


def likelihood_from_error(err_sq: float, xi: float) -> float:
    if xi <= 0:
        raise ValueError("xi must be > 0")
    return float(np.exp(-err_sq / (2.0 * xi)))


def likelihood(candidate: np.ndarray, pool: TemplatePool, xi: float, cutoff: float) -> float:
    """exp(-||n - S*||^2 / (2 xi)) over [0, 1]-normalized intensities."""
    return likelihood_from_error(reconstruction_error(pool, candidate, cutoff), xi)


def sigmoid(x) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def candidate_set(pool: TemplatePool, proposals: Sequence[Proposal]) -> List[int]:
    """Indices of proposals whose box overlaps the pool's last box by >= 1 pixel."""
    return [
        i for i, p in enumerate(proposals) if p.box.intersection_area(pool.last_box) > 0
    ]


def optimize_xi_from_errors(err_sqs: Sequence[float], grid: Sequence[float] = XI_GRID) -> float:
    """Grid value maximizing the variance of sigmoid(likelihood); ties pick the smaller xi."""
    errs = np.asarray(err_sqs, dtype=np.float64)
    if errs.size == 0:
        raise ValueError("need at least one candidate error")
    best_xi = None
    best_var = -1.0
    for xi in grid:  # ascending grid, strict '>' keeps the smaller xi on ties
        rho = sigmoid(np.exp(-errs / (2.0 * xi)))
        var = float(np.var(rho))
        if var > best_var:
            best_var = var
            best_xi = xi
    return float(best_xi)


def optimize_xi(
    pool: TemplatePool,
    candidates: Sequence[np.ndarray],
    cutoff: float,
    grid: Sequence[float] = XI_GRID,
) -> float:
    errs = [reconstruction_error(pool, c, cutoff) for c in candidates]
    return optimize_xi_from_errors(errs, grid)


def mean_xi(per_pool_xi: Sequence[float], previous: float = INITIAL_XI) -> float:
    """Arithmetic mean over pools that had candidates; falls back to ``previous``."""
    values = list(per_pool_xi)
    if not values:
        return float(previous)
    return float(np.mean(values))


def quality_from_errors(
    psi: float, err_by_pool: Dict[int, float], xi_hat: float
) -> Tuple[float, Optional[int]]:
    """Quality score psi * max_pool sigmoid(likelihood) and the best pool id.

    Proposals with no eligible pool score psi * 0.5, the infimum of the
    sigmoid-squashed likelihood, and carry no pool id.
    """
    if not err_by_pool:
        return psi * 0.5, None
    best_id = None
    best_rho = -1.0
    for pid in sorted(err_by_pool):  # ascending ids, ties keep the lower id
        rho = float(sigmoid(likelihood_from_error(err_by_pool[pid], xi_hat)))
        if rho > best_rho:
            best_rho = rho
            best_id = pid
    return psi * best_rho, best_id


def quality_score(
    proposal: Proposal,
    frame: Frame,
    pools: Sequence[TemplatePool],
    xi_hat: float,
    cfg: PipelineConfig,
) -> Tuple[float, Optional[int]]:
    """Spec-level scoring of one proposal against the pools it overlaps."""
    patch = crop_resize(frame, proposal.box, cfg.template_width, cfg.template_height)
    errs = {
        pool.pool_id: reconstruction_error(pool, patch, cfg.low_freq_cutoff)
        for pool in pools
        if proposal.box.intersection_area(pool.last_box) > 0
    }
    return quality_from_errors(proposal.psi, errs, xi_hat)


@dataclass(frozen=True)
class ScoredProposal:
    proposal: Proposal
    quality: float
    pool_id: Optional[int]


def nms(scored: Sequence[ScoredProposal], iou_threshold: float) -> List[ScoredProposal]:
    """Greedy suppression by descending quality.

    A proposal survives when its IoU with every kept box stays <= the
    threshold and its pool id (if any) has not been claimed yet, so each pool
    gets at most one survivor.
    """
    def order_key(s: ScoredProposal):
        b = s.proposal.box
        return (-s.quality, b.x, b.y, b.w, b.h)

    kept: List[ScoredProposal] = []
    claimed = set()
    for cand in sorted(scored, key=order_key):
        if cand.pool_id is not None and cand.pool_id in claimed:
            continue
        if any(cand.proposal.box.iou(k.proposal.box) > iou_threshold for k in kept):
            continue
        kept.append(cand)
        if cand.pool_id is not None:
            claimed.add(cand.pool_id)
    return kept


def evict_least_likely(pool: TemplatePool, xi_hat: float, cutoff: float) -> int:
    """Drop the slice worst explained by one full-volume low-pass reconstruction."""
    volume = pool.volume()
    recon = low_freq_reconstruct(volume, cutoff)
    errs = ((volume - recon) ** 2).sum(axis=(0, 1))
    likes = np.exp(-errs / (2.0 * xi_hat))
    d = int(np.argmin(likes))  # ties keep the earliest slice
    del pool.templates[d]
    return d


def update_pool(
    pool: TemplatePool,
    patch: np.ndarray,
    box: BoundingBox,
    frame_index: int,
    xi_hat: float,
    max_templates: int,
    cutoff: float,
) -> Optional[int]:
    """Append the newest template; evict one slice if capacity is exceeded."""
    pool.templates.append(np.asarray(patch, dtype=np.uint8))
    pool.last_box = box
    pool.last_associated_frame = frame_index
    if len(pool.templates) > max_templates:
        return evict_least_likely(pool, xi_hat, cutoff)
    return None


def prune_stale_pools(
    pools: Dict[int, TemplatePool], current_frame: int, stale_after: int
) -> List[int]:
    """Remove pools not associated for more than ``stale_after`` frames."""
    stale = [
        pid
        for pid, pool in pools.items()
        if current_frame - pool.last_associated_frame > stale_after
    ]
    for pid in stale:
        del pools[pid]
    return stale


@dataclass(frozen=True)
class AssociationResult:
    observers: Tuple[Tuple[int, Proposal], ...]  # pools updated this frame
    created_ids: Tuple[int, ...]
    pruned_ids: Tuple[int, ...]
    survivors: Tuple[ScoredProposal, ...]
    xi_hat: float


class PoolManager:
    """Owns the pool population and runs one association pass per frame."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.pools: Dict[int, TemplatePool] = {}
        self.xi_hat = INITIAL_XI
        self._next_id = 0

    def _create(self, patch: np.ndarray, box: BoundingBox, frame_index: int) -> int:
        pid = self._next_id
        self._next_id += 1  # ids are never reused within a run
        self.pools[pid] = TemplatePool(
            pool_id=pid,
            templates=[np.asarray(patch, dtype=np.uint8)],
            last_box=box,
            last_associated_frame=frame_index,
        )
        return pid

    def associate(
        self, frame: Frame, proposals: Sequence[Proposal], frame_index: int
    ) -> AssociationResult:
        cfg = self.cfg
        pruned = prune_stale_pools(self.pools, frame_index, cfg.stale_after)

        patches = [
            crop_resize(frame, p.box, cfg.template_width, cfg.template_height)
            for p in proposals
        ]

        # reconstruction errors for every (proposal, overlapping pool) pair
        err_by_prop: List[Dict[int, float]] = [dict() for _ in proposals]
        per_pool_xi = []
        for pid in sorted(self.pools):
            pool = self.pools[pid]
            idxs = candidate_set(pool, proposals)
            if not idxs:
                continue
            errs = [
                reconstruction_error(pool, patches[i], cfg.low_freq_cutoff) for i in idxs
            ]
            for i, err in zip(idxs, errs):
                err_by_prop[i][pid] = err
            per_pool_xi.append(optimize_xi_from_errors(errs))
        self.xi_hat = mean_xi(per_pool_xi, previous=self.xi_hat)

        scored = []
        idx_of = {}
        for i, (p, errs) in enumerate(zip(proposals, err_by_prop)):
            q, pid = quality_from_errors(p.psi, errs, self.xi_hat)
            s = ScoredProposal(proposal=p, quality=q, pool_id=pid)
            scored.append(s)
            idx_of[id(s)] = i
        survivors = nms(scored, cfg.nms_iou)

        observers = []
        created = []
        for s in survivors:
            i = idx_of[id(s)]
            if s.pool_id is None:
                created.append(self._create(patches[i], s.proposal.box, frame_index))
            else:
                update_pool(
                    self.pools[s.pool_id],
                    patches[i],
                    s.proposal.box,
                    frame_index,
                    self.xi_hat,
                    cfg.max_pool_templates,
                    cfg.low_freq_cutoff,
                )
                observers.append((s.pool_id, s.proposal))
        return AssociationResult(
            observers=tuple(observers),
            created_ids=tuple(created),
            pruned_ids=tuple(pruned),
            survivors=tuple(survivors),
            xi_hat=self.xi_hat,
        )
