"""Shared types, configuration, frame ingestion and patch geometry."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Tuple

import numpy as np
from PIL import Image


class PipelineError(Exception):
    """Base class for errors raised by this package."""


class InputError(PipelineError):
    """Unreadable, inconsistent or missing input data."""


class GeometryError(PipelineError):
    """Box or patch geometry that does not fit the frame it refers to."""


class ConfigError(PipelineError):
    """Malformed configuration file or invalid parameter value."""


SUPPORTED_EXTENSIONS = (".png", ".pgm", ".ppm", ".pnm", ".pbm")
MIN_FRAME_DIM = 16


@dataclass(frozen=True)
class Frame:
    """One 8-bit grayscale frame, row-major (height, width)."""

    data: np.ndarray
    index: int = 0

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise InputError("frame data must be 2-D, got shape %r" % (data.shape,))
        if data.dtype != np.uint8:
            raise InputError("frame data must be uint8, got %s" % data.dtype)
        if min(data.shape) < MIN_FRAME_DIM:
            raise InputError(
                "frame smaller than %dx%d: %r" % (MIN_FRAME_DIM, MIN_FRAME_DIM, data.shape)
            )
        if self.index < 0:
            raise InputError("frame index must be >= 0")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def as_float(self) -> np.ndarray:
        """Intensities rescaled to [0, 1] as float64."""
        return self.data.astype(np.float64) / 255.0


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned integer pixel box. Covers columns [x, x+w) and rows [y, y+h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise GeometryError("box needs positive dims, got %dx%d" % (self.w, self.h))

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def aspect(self) -> float:
        return self.w / self.h

    @property
    def center(self) -> Tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def is_inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.right <= width and self.bottom <= height

    def intersection_area(self, other: "BoundingBox") -> int:
        dx = min(self.right, other.right) - max(self.x, other.x)
        dy = min(self.bottom, other.bottom) - max(self.y, other.y)
        if dx <= 0 or dy <= 0:
            return 0
        return dx * dy

    def iou(self, other: "BoundingBox") -> float:
        inter = self.intersection_area(other)
        if inter == 0:
            return 0.0
        return inter / float(self.area + other.area - inter)

    def clamped(self, width: int, height: int) -> "BoundingBox":
        """Same-size box translated (and shrunk only if oversized) to fit the frame."""
        w = min(self.w, width)
        h = min(self.h, height)
        x = min(max(self.x, 0), width - w)
        y = min(max(self.y, 0), height - h)
        return BoundingBox(x, y, w, h)


@dataclass(frozen=True)
class FrameSequence:
    """Ordered grayscale frames of uniform size; position in the tuple is time."""

    frames: Tuple[Frame, ...]

    def __post_init__(self):
        if not self.frames:
            raise InputError("empty frame sequence")
        w, h = self.frames[0].width, self.frames[0].height
        for f in self.frames:
            if (f.width, f.height) != (w, h):
                raise InputError(
                    "frame %d is %dx%d, expected %dx%d" % (f.index, f.width, f.height, w, h)
                )

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, i) -> Frame:
        return self.frames[i]

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)


@dataclass
class PipelineConfig:
    """All tunable parameters of the detection pipeline.

    Defaults target real footage; synthetic scenes usually lower min_entropy
    (flat-shaded actors carry little texture).
    """

    # proposal gating
    min_foreground_fraction: float = 0.5
    min_entropy: float = 0.7
    aspect_min: float = 0.33
    aspect_max: float = 0.49
    min_segment_area: int = 16

    # template pools
    max_pool_templates: int = 6
    stale_after: int = 4
    template_width: int = 24
    template_height: int = 56
    low_freq_cutoff: float = 0.25
    nms_iou: float = 0.3

    # descriptors and scoring
    neighbor_count: int = 5
    saliency_mass: float = 0.70
    histogram_span: float = 0.9
    orientation_bins: int = 16
    smooth_half_len: int = 3
    anomaly_threshold: float = 0.5

    # background model
    gmm_components: int = 4
    gmm_learning_rate: float = 0.01
    gmm_match_sigma: float = 2.5
    gmm_background_ratio: float = 0.7
    gmm_initial_variance: float = 100.0
    gmm_variance_floor: float = 4.0
    warmup_frames: int = 30

    # optical flow and saliency
    flow_levels: int = 3
    flow_iterations: int = 100
    flow_smoothness: float = 0.1
    saliency_sigma: float = 1.5

    def __post_init__(self):
        if not 0.0 < self.low_freq_cutoff <= 1.0:
            raise ConfigError("low_freq_cutoff must be in (0, 1]")
        if not 0.0 < self.saliency_mass < 1.0:
            raise ConfigError("saliency_mass must be in (0, 1)")
        if not 0.0 <= self.histogram_span <= 1.0:
            raise ConfigError("histogram_span must be in [0, 1]")
        if self.max_pool_templates < 1:
            raise ConfigError("max_pool_templates must be >= 1")
        if self.neighbor_count < 1:
            raise ConfigError("neighbor_count must be >= 1")
        if self.orientation_bins < 2:
            raise ConfigError("orientation_bins must be >= 2")
        if self.smooth_half_len < 0:
            raise ConfigError("smooth_half_len must be >= 0")
        if self.template_width < 4 or self.template_height < 4:
            raise ConfigError("template dims must be >= 4")
        if self.gmm_components < 1:
            raise ConfigError("gmm_components must be >= 1")

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        """Read a ``key = value`` config file. Unknown keys are an error."""
        fields = {f.name: f for f in dataclasses.fields(cls)}
        overrides = {}
        text = Path(path).read_text()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("%s:%d: expected 'key = value', got %r" % (path, lineno, raw))
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in fields:
                raise ConfigError("%s:%d: unknown key %r" % (path, lineno, key))
            ftype = fields[key].type
            try:
                if ftype in ("int", int):
                    overrides[key] = int(value)
                else:
                    overrides[key] = float(value)
            except ValueError:
                raise ConfigError("%s:%d: bad value %r for key %r" % (path, lineno, value, key))
        return cls(**overrides)

    def as_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append("%s = %s" % (f.name, getattr(self, f.name)))
        return "\n".join(lines) + "\n"


def load_sequence(directory) -> FrameSequence:
    """Load all supported images under ``directory`` as one grayscale sequence.

    Lexicographic filename order defines time. At least two frames are required.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError("input directory not found: %s" % directory)
    paths = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in SUPPORTED_EXTENSIONS
    )
    if len(paths) < 2:
        raise InputError(
            "need at least 2 frames in %s, found %d" % (directory, len(paths))
        )
    frames = []
    shape = None
    for i, p in enumerate(paths):
        try:
            with Image.open(p) as img:
                data = np.asarray(img.convert("L"), dtype=np.uint8)
        except (OSError, ValueError) as exc:
            raise InputError("unreadable image %s: %s" % (p.name, exc))
        if shape is None:
            shape = data.shape
        elif data.shape != shape:
            raise InputError(
                "frame size mismatch at %s: %r, expected %r" % (p.name, data.shape, shape)
            )
        frames.append(Frame(data=data, index=i))
    return FrameSequence(frames=tuple(frames))


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel centers and edge replication.

    Same-size calls reproduce the input exactly.
    """
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    y0f = np.floor(ys)
    x0f = np.floor(xs)
    wy = ys - y0f
    wx = xs - x0f
    y0 = np.clip(y0f.astype(np.int64), 0, in_h - 1)
    y1 = np.clip(y0f.astype(np.int64) + 1, 0, in_h - 1)
    x0 = np.clip(x0f.astype(np.int64), 0, in_w - 1)
    x1 = np.clip(x0f.astype(np.int64) + 1, 0, in_w - 1)
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy)[:, None] + bot * wy[:, None]


def crop_resize(frame: Frame, box: BoundingBox, target_w: int, target_h: int) -> np.ndarray:
    """Crop ``box`` from ``frame`` and resample to (target_h, target_w) uint8."""
    if target_w < 4 or target_h < 4:
        raise GeometryError("target dims must be >= 4, got %dx%d" % (target_w, target_h))
    if not box.is_inside(frame.width, frame.height):
        raise GeometryError(
            "box %r outside %dx%d frame" % (box, frame.width, frame.height)
        )
    crop = frame.data[box.y : box.bottom, box.x : box.right].astype(np.float64)
    out = bilinear_resize(crop, target_h, target_w)
    return np.rint(out).astype(np.uint8)
