"""Monocular object distance estimation from detection boxes.

A small numpy neural-network engine, KITTI label/detection I/O, DECADE and
DisNet feature builders, the PoseCNN/DistMLP/DisNet models, IoU matching,
training and adaptation loops, evaluation reports and a synthetic pinhole
world for testing.
"""

from .engine import Adam, LayerSpec, Network, Tensor, gradient_check
from .evaluation import EvalReport, build_report, mae, mre, pose_mae
from .features import build_decade_features, build_disnet_features, effective_orientation
from .kitti import DetectionRecord, ImageMeta, LabelRecord, extract_crop, parse_label_line, preprocess
from .matching import build_adaptation_dataset, iou, match_detections
from .models import (
    build_disnet,
    build_distmlp,
    build_posecnn,
    count_flops,
    count_params,
    load_checkpoint,
    save_checkpoint,
)
from .pipeline import adapt_decade, evaluate_end_to_end, evaluate_ground_truth, ground_truth_datasets
from .synth import SynthConfig, generate_samples, perturb_detections, render_crop, render_scene
from .training import TrainConfig, adapt, distance_config, pose_config, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "DetectionRecord",
    "EvalReport",
    "ImageMeta",
    "LabelRecord",
    "LayerSpec",
    "Network",
    "SynthConfig",
    "Tensor",
    "TrainConfig",
    "adapt",
    "adapt_decade",
    "build_adaptation_dataset",
    "build_decade_features",
    "build_disnet",
    "build_disnet_features",
    "build_distmlp",
    "build_posecnn",
    "build_report",
    "count_flops",
    "count_params",
    "distance_config",
    "effective_orientation",
    "evaluate_end_to_end",
    "evaluate_ground_truth",
    "extract_crop",
    "generate_samples",
    "gradient_check",
    "ground_truth_datasets",
    "iou",
    "load_checkpoint",
    "mae",
    "match_detections",
    "mre",
    "parse_label_line",
    "perturb_detections",
    "pose_config",
    "pose_mae",
    "preprocess",
    "render_crop",
    "render_scene",
    "save_checkpoint",
    "train",
]
