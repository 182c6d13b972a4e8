"""Dense optical flow, temporal saliency and saliency-modulated flow.

Flow comes from a coarse-to-fine Horn-Schunck solver. Saliency is the
Gaussian-smoothed absolute temporal derivative of intensity, min-max
normalized per frame. Flow vectors are then rescaled pixelwise by

    F(s) = exp((s - tau) / (2 tau))   for s <= tau
    F(s) = exp(s / 2)                 for s >  tau

which keeps the gain inside [e^-1/2, e^1/2] for s in [0, 1]: sub-threshold
motion is damped, salient motion amplified. The jump at s = tau is part of
the definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .core import BoundingBox, Frame, GeometryError, InputError, bilinear_resize

_HS_KERNEL = np.array(
    [[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]]
)
_MIN_LEVEL_DIM = 8


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement in pixels/frame: u along x, v along y."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise InputError("u and v must be 2-D arrays of the same shape")

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


@dataclass(frozen=True)
class SaliencyMap:
    """Per-pixel temporal saliency in [0, 1]."""

    values: np.ndarray


@dataclass(frozen=True)
class ModulatedFlowField:
    u: np.ndarray
    v: np.ndarray
    tau: float

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


def _warp(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w]
    return ndimage.map_coordinates(img, [yy + v, xx + u], order=1, mode="nearest")


def _hs_increment(
    im1: np.ndarray, im2: np.ndarray, iterations: int, smoothness: float
) -> Tuple[np.ndarray, np.ndarray]:
    avg = 0.5 * (im1 + im2)
    fx = np.gradient(avg, axis=1)
    fy = np.gradient(avg, axis=0)
    ft = im2 - im1
    den = smoothness + fx * fx + fy * fy
    u = np.zeros_like(im1)
    v = np.zeros_like(im1)
    for _ in range(iterations):
        ubar = ndimage.convolve(u, _HS_KERNEL, mode="nearest")
        vbar = ndimage.convolve(v, _HS_KERNEL, mode="nearest")
        t = (fx * ubar + fy * vbar + ft) / den
        u = ubar - fx * t
        v = vbar - fy * t
    return u, v


def compute_flow(
    prev: Frame,
    curr: Frame,
    levels: int = 3,
    iterations: int = 100,
    smoothness: float = 0.1,
) -> FlowField:
    """Pyramidal Horn-Schunck flow from ``prev`` to ``curr``.

    Positive u means content moved rightward, positive v downward. Levels are
    capped so the coarsest image keeps both dims >= 8.
    """
    if (prev.width, prev.height) != (curr.width, curr.height):
        raise InputError("frame dims differ")
    if iterations < 1 or levels < 1:
        raise InputError("levels and iterations must be >= 1")
    im1 = prev.as_float()
    im2 = curr.as_float()

    pyr1 = [im1]
    pyr2 = [im2]
    while len(pyr1) < levels:
        base = pyr1[-1]
        nh, nw = math.ceil(base.shape[0] / 2), math.ceil(base.shape[1] / 2)
        if min(nh, nw) < _MIN_LEVEL_DIM:
            break
        pyr1.append(bilinear_resize(ndimage.gaussian_filter(base, 1.0), nh, nw))
        pyr2.append(bilinear_resize(ndimage.gaussian_filter(pyr2[-1], 1.0), nh, nw))

    u = np.zeros_like(pyr1[-1])
    v = np.zeros_like(pyr1[-1])
    for level in range(len(pyr1) - 1, -1, -1):
        a, b = pyr1[level], pyr2[level]
        if u.shape != a.shape:
            oh, ow = u.shape
            u = bilinear_resize(u, a.shape[0], a.shape[1]) * (a.shape[1] / ow)
            v = bilinear_resize(v, a.shape[0], a.shape[1]) * (a.shape[0] / oh)
        warped = _warp(b, u, v)
        du, dv = _hs_increment(a, warped, iterations, smoothness)
        u = u + du
        v = v + dv
    return FlowField(u=u, v=v)


def compute_saliency(frames: Sequence[Frame], sigma: float = 1.5) -> SaliencyMap:
    """Temporal saliency of the newest frame from the trailing 2-3 frame window.

    Three frames give the absolute central difference |f[t] - f[t-2]| / 2, two
    frames the absolute forward difference. The smoothed map is min-max
    normalized; an all-zero derivative stays all zero.
    """
    if len(frames) < 2:
        raise InputError("saliency needs at least 2 frames")
    window = list(frames)[-3:]
    if len(window) == 3:
        d = 0.5 * np.abs(
            window[2].data.astype(np.float64) - window[0].data.astype(np.float64)
        )
    else:
        d = np.abs(window[1].data.astype(np.float64) - window[0].data.astype(np.float64))
    g = ndimage.gaussian_filter(d, sigma)
    lo = g.min()
    hi = g.max()
    if hi <= lo:
        return SaliencyMap(values=np.zeros_like(g))
    return SaliencyMap(values=(g - lo) / (hi - lo))


def compute_tau(saliency: SaliencyMap, alpha: float) -> float:
    """Largest 256-bin upper edge tau' with empirical P(s <= tau') <= alpha.

    Returns 0 when no edge qualifies (e.g. a constant all-zero map).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    s = np.sort(saliency.values.ravel())
    edges = np.arange(1, 257) / 256.0
    p = np.searchsorted(s, edges, side="right") / s.size
    ok = edges[p <= alpha]
    return float(ok[-1]) if ok.size else 0.0


def modulation_factor(s: np.ndarray, tau: float) -> np.ndarray:
    """Two-branch saliency gain; see module docstring. tau = 0 maps s = 0 to 1."""
    s = np.asarray(s, dtype=np.float64)
    if tau <= 0.0:
        return np.where(s > 0, np.exp(s / 2.0), 1.0)
    return np.where(s <= tau, np.exp((s - tau) / (2.0 * tau)), np.exp(s / 2.0))


def modulate(flow: FlowField, saliency: SaliencyMap, tau: float) -> ModulatedFlowField:
    """Scale each flow vector by its saliency gain (direction preserving)."""
    if flow.u.shape != saliency.values.shape:
        raise InputError("flow and saliency dims differ")
    f = modulation_factor(saliency.values, tau)
    return ModulatedFlowField(u=flow.u * f, v=flow.v * f, tau=float(tau))


def motion_energy(mof: ModulatedFlowField, box: BoundingBox) -> Tuple[float, float, float, float]:
    """(max, min, mean, population variance) of flow magnitude inside the box."""
    h, w = mof.u.shape
    if not box.is_inside(w, h):
        raise GeometryError("box %r outside %dx%d field" % (box, w, h))
    mag = np.hypot(
        mof.u[box.y : box.bottom, box.x : box.right],
        mof.v[box.y : box.bottom, box.x : box.right],
    )
    return (float(mag.max()), float(mag.min()), float(mag.mean()), float(mag.var()))
