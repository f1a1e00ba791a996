"""Discriminative-saliency non-rigid object tracking with a small trainable FCN."""

from .exceptions import (
    ConfigurationError,
    DegenerateRegionError,
    EmptyMaskError,
    ImageReadError,
    InitializationError,
    NumericError,
    SalitrackError,
    TargetLostError,
    TrainingError,
    UsageError,
)
from .fusion import DiscriminativeSaliency, fuse_pipeline
from .io import RunConfig, SequenceManifest, load_image, load_mask, parse_config, parse_manifest
from .metrics import EvalRecord, adaptive_f_measure, f_measure, iou_bbox, iou_mask, pr_curve
from .regions import RegionGrid, RegionSpec, make_region_grid
from .saliency_net import NetworkParams, SaliencyNetwork, Topology
from .tracker import NonRigidTracker, TrackerConfig, TrackerState, TrackOutput

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DegenerateRegionError",
    "DiscriminativeSaliency",
    "EmptyMaskError",
    "EvalRecord",
    "ImageReadError",
    "InitializationError",
    "NetworkParams",
    "NonRigidTracker",
    "NumericError",
    "RegionGrid",
    "RegionSpec",
    "RunConfig",
    "SaliencyNetwork",
    "SalitrackError",
    "SequenceManifest",
    "TargetLostError",
    "Topology",
    "TrackOutput",
    "TrackerConfig",
    "TrackerState",
    "TrainingError",
    "UsageError",
    "adaptive_f_measure",
    "f_measure",
    "fuse_pipeline",
    "iou_bbox",
    "iou_mask",
    "load_image",
    "load_mask",
    "make_region_grid",
    "parse_config",
    "parse_manifest",
    "pr_curve",
]
