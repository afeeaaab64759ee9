"""Vision tasks as instruction-conditioned image-to-image diffusion, desk scale.

Segmentation, detection, depth estimation and binary classification all
share one model: the task label is rendered as an RGB image, a text
instruction names the task, and a conditional diffusion model learns to
paint the answer.
"""

from .augment import augment
from .boxes import DetectionBox, box_iou, decode_detection, encode_detection
from .codecs import (
    DepthMap,
    classify,
    cls_score,
    decode_depth,
    decode_segmentation,
    encode_classification,
    encode_depth,
    encode_segmentation,
)
from .denoiser import Denoiser, DenoiserConfig
from .diffusion import DropoutConfig, GuidanceConfig
from .evaluate import EvalReport, evaluate_split, oracle_infer_fn
from .latents import LatentCodec
from .manifest import Manifest, TaskSample, build_manifest, split_assign
from .metrics import classification_accuracy, depth_metrics, map_at_50, miou
from .palette import PALETTE, ColorSpec, color
from .prompts import (
    FIXED_TEMPLATES,
    Instruction,
    ParaphraseBank,
    render_fixed,
    render_rephrased,
)
from .sampler import KarrasConfig, sample_batch, sample_euler_ancestral
from .schedule import NoiseSchedule, forward_sample, make_schedule
from .sources import SourceSpec, ingest
from .synthetic import make_synthetic_sources
from .training import TrainConfig, TrainItem, train_model

__version__ = "0.1.0"

__all__ = [
    "ColorSpec",
    "Denoiser",
    "DenoiserConfig",
    "DetectionBox",
    "DepthMap",
    "DropoutConfig",
    "EvalReport",
    "FIXED_TEMPLATES",
    "GuidanceConfig",
    "Instruction",
    "KarrasConfig",
    "LatentCodec",
    "Manifest",
    "NoiseSchedule",
    "PALETTE",
    "ParaphraseBank",
    "SourceSpec",
    "TaskSample",
    "TrainConfig",
    "TrainItem",
    "augment",
    "box_iou",
    "build_manifest",
    "classification_accuracy",
    "classify",
    "cls_score",
    "color",
    "decode_depth",
    "decode_detection",
    "decode_segmentation",
    "depth_metrics",
    "encode_classification",
    "encode_depth",
    "encode_detection",
    "encode_segmentation",
    "evaluate_split",
    "forward_sample",
    "ingest",
    "make_schedule",
    "make_synthetic_sources",
    "map_at_50",
    "miou",
    "oracle_infer_fn",
    "render_fixed",
    "render_rephrased",
    "sample_batch",
    "sample_euler_ancestral",
    "split_assign",
    "train_model",
]
