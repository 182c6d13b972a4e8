"""Training-free crowd anomaly detection on grayscale frame sequences.

The package segments moving foreground with an adaptive per-pixel mixture
model, tracks objects through appearance template pools compared in a
frequency-truncated transform domain, describes each tracked object by
saliency-modulated optical flow statistics over its spatial neighborhood,
and scores frames by the transport distance between consecutive descriptor
sets. No offline training is involved; every statistic adapts online.
"""

from .association import PoolManager, TemplatePool, dct3, idct3, low_freq_reconstruct
from .background import BackgroundModel, ForegroundMask, cleanup
from .core import (
    BoundingBox,
    ConfigError,
    Frame,
    FrameSequence,
    GeometryError,
    InputError,
    PipelineConfig,
    PipelineError,
    bilinear_resize,
    crop_resize,
    load_sequence,
)
from .descriptors import LocalDescriptor, build_descriptors, chi2, hmof
from .evaluation import Metrics, auc, eer, evaluate, load_labels, roc
from .motionfield import (
    FlowField,
    ModulatedFlowField,
    SaliencyMap,
    compute_flow,
    compute_saliency,
    compute_tau,
    modulate,
    modulation_factor,
)
from .pipeline import PipelineResult, run_pipeline, write_outputs
from .proposals import Proposal, Segment, edge_fused_segment, generate_proposals
from .scoring import Signature, classify, emd, filter_weights, smooth
from .synth import PRESETS, SceneScript, parse_script, render

__version__ = "0.1.0"

__all__ = [
    "BackgroundModel",
    "BoundingBox",
    "ConfigError",
    "FlowField",
    "ForegroundMask",
    "Frame",
    "FrameSequence",
    "GeometryError",
    "InputError",
    "LocalDescriptor",
    "Metrics",
    "ModulatedFlowField",
    "PipelineConfig",
    "PipelineError",
    "PipelineResult",
    "PoolManager",
    "PRESETS",
    "Proposal",
    "SaliencyMap",
    "SceneScript",
    "Segment",
    "Signature",
    "TemplatePool",
    "auc",
    "bilinear_resize",
    "build_descriptors",
    "chi2",
    "classify",
    "cleanup",
    "compute_flow",
    "compute_saliency",
    "compute_tau",
    "crop_resize",
    "dct3",
    "edge_fused_segment",
    "eer",
    "emd",
    "evaluate",
    "filter_weights",
    "generate_proposals",
    "hmof",
    "idct3",
    "load_labels",
    "load_sequence",
    "low_freq_reconstruct",
    "modulate",
    "modulation_factor",
    "parse_script",
    "render",
    "roc",
    "run_pipeline",
    "smooth",
    "write_outputs",
    "__version__",
]
