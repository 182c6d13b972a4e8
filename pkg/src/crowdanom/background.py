"""Per-pixel Gaussian-mixture background subtraction and mask cleanup."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import Frame, InputError


@dataclass(frozen=True)
class ForegroundMask:
    """Boolean foreground map aligned with one frame."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2 or bits.dtype != np.bool_:
            raise InputError("mask must be 2-D boolean")
        object.__setattr__(self, "bits", bits)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


class BackgroundModel:
    """Adaptive mixture of Gaussians per pixel (Stauffer-Grimson style).

    Components are ranked by weight/sigma; the top components holding
    ``background_ratio`` of the cumulative weight model the background. A pixel
    is foreground when no background-ranked component matches it within
    ``match_sigma`` standard deviations. With learning_rate == 0 the model is
    frozen and update_and_classify only classifies.
    """

    def __init__(
        self,
        height: int,
        width: int,
        n_components: int = 4,
        learning_rate: float = 0.01,
        match_sigma: float = 2.5,
        background_ratio: float = 0.7,
        initial_variance: float = 100.0,
        variance_floor: float = 4.0,
    ):
        self.height = height
        self.width = width
        self.n_components = n_components
        self.learning_rate = learning_rate
        self.match_sigma = match_sigma
        self.background_ratio = background_ratio
        self.initial_variance = initial_variance
        self.variance_floor = variance_floor
        shape = (height, width, n_components)
        self.means = np.zeros(shape)
        self.variances = np.full(shape, variance_floor)
        self.weights = np.zeros(shape)
        self._initialized = False

    def _background_ranked(self) -> np.ndarray:
        """Boolean (H, W, G): component belongs to the background set."""
        sd = np.sqrt(self.variances)
        rank = np.where(self.weights > 0, self.weights / sd, -np.inf)
        order = np.argsort(-rank, axis=2, kind="stable")
        w_sorted = np.take_along_axis(self.weights, order, axis=2)
        cum_before = np.cumsum(w_sorted, axis=2) - w_sorted
        bg_sorted = (cum_before < self.background_ratio) & (w_sorted > 0)
        bg = np.zeros_like(bg_sorted)
        np.put_along_axis(bg, order, bg_sorted, axis=2)
        return bg

    def update_and_classify(self, frame: Frame) -> ForegroundMask:
        if (frame.height, frame.width) != (self.height, self.width):
            raise InputError(
                "frame is %dx%d, model expects %dx%d"
                % (frame.width, frame.height, self.width, self.height)
            )
        x = frame.data.astype(np.float64)
        if not self._initialized:
            self.means[:, :, 0] = x
            self.variances[:, :, :] = self.initial_variance
            self.weights[:, :, :] = 0.0
            self.weights[:, :, 0] = 1.0
            self._initialized = True
            return self._classify(x)
        if self.learning_rate > 0:
            self._update(x)
        return self._classify(x)

    def _classify(self, x: np.ndarray) -> ForegroundMask:
        diff = np.abs(x[:, :, None] - self.means)
        matched = (diff <= self.match_sigma * np.sqrt(self.variances)) & (self.weights > 0)
        fg = ~np.any(matched & self._background_ranked(), axis=2)
        return ForegroundMask(bits=fg)

    def _update(self, x: np.ndarray):
        lr = self.learning_rate
        diff = x[:, :, None] - self.means
        matched = (np.abs(diff) <= self.match_sigma * np.sqrt(self.variances)) & (
            self.weights > 0
        )
        any_match = matched.any(axis=2)
        # strongest matching component absorbs the sample
        score = np.where(matched, self.weights / np.sqrt(self.variances), -np.inf)
        best = np.argmax(score, axis=2)
        rows, cols = np.indices((self.height, self.width))
        hit = np.zeros_like(self.weights, dtype=bool)
        hit[rows, cols, best] = True
        hit &= any_match[:, :, None]

        self.weights *= 1.0 - lr
        self.weights[hit] += lr
        mu = self.means[hit]
        xx = np.broadcast_to(x[:, :, None], hit.shape)[hit]
        mu_new = mu + lr * (xx - mu)
        self.means[hit] = mu_new
        var = self.variances[hit]
        self.variances[hit] = np.maximum(
            self.variance_floor, (1.0 - lr) * var + lr * (xx - mu_new) ** 2
        )

        # unmatched pixels replace their weakest component with a fresh one
        miss = ~any_match
        if miss.any():
            weakest = np.argmin(self.weights, axis=2)
            mr, mc = rows[miss], cols[miss]
            mk = weakest[miss]
            self.means[mr, mc, mk] = x[miss]
            self.variances[mr, mc, mk] = self.initial_variance
            self.weights[mr, mc, mk] = lr
        self.weights /= self.weights.sum(axis=2, keepdims=True)


_STRUCT3 = np.ones((3, 3), dtype=bool)


def cleanup(mask: ForegroundMask) -> ForegroundMask:
    """Morphological open then close with a 3x3 structuring element.

    Opening drops isolated pixels and hairline noise; closing fills small
    holes. The erosion inside closing pads with foreground so the step stays
    extensive at frame borders.
    """
    opened = ndimage.binary_dilation(
        ndimage.binary_erosion(mask.bits, structure=_STRUCT3), structure=_STRUCT3
    )
    closed = ndimage.binary_erosion(
        ndimage.binary_dilation(opened, structure=_STRUCT3),
        structure=_STRUCT3,
        border_value=1,
    )
    return ForegroundMask(bits=closed)
